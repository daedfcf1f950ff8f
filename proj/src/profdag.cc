/*
 * Copyright (C) 2026 The profinfer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "profinfer/profdag.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "profinfer/error.h"
#include "profinfer/profstat.h"
#include "profinfer/session_io.h"

namespace profinfer {

namespace {

using Json = nlohmann::ordered_json;

std::string NodeId(Addr addr) { return "\"" + AddrToHex(addr) + "\""; }

std::string DotEscape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string FormatValue(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::vector<const OpNode*> ProfDag::OpsInOrder() const {
  std::vector<const OpNode*> out;
  for (const auto& [addr, n] : nodes) {
    if (!n.is_constant) out.push_back(&n);
  }
  std::sort(out.begin(), out.end(),
            [](const OpNode* a, const OpNode* b) { return *a->order < *b->order; });
  return out;
}

ProfDag BuildProfDag(const IngestResult& ingest, const SessionHeader& header, int64_t n_tar) {
  if (ingest.FindIteration(n_tar) == nullptr) {
    std::string range = ingest.iterations.empty()
                            ? "the session has no token spans"
                            : "valid iterations are 0.." + std::to_string(ingest.iterations.size() - 1);
    throw Error(ErrorCode::kUnknownIteration,
                "iteration " + std::to_string(n_tar) + " does not exist; " + range);
  }

  std::map<Tid, std::vector<const OpSpan*>> by_tid;
  for (const OpSpan& s : ingest.spans) {
    if (s.iteration == n_tar) by_tid[s.tid].push_back(&s);
  }
  if (by_tid.empty()) {
    throw Error(ErrorCode::kDagUnavailable,
                "iteration " + std::to_string(n_tar) + " has no operator spans");
  }
  // Most ops wins; map order makes the lowest tid win ties.
  Tid ref = by_tid.begin()->first;
  for (const auto& [tid, spans] : by_tid) {
    if (spans.size() > by_tid[ref].size()) ref = tid;
  }
  std::vector<const OpSpan*>& ref_spans = by_tid[ref];
  std::sort(ref_spans.begin(), ref_spans.end(), [](const OpSpan* a, const OpSpan* b) {
    return std::tie(a->enter.ts_ns, a->enter.seq) < std::tie(b->enter.ts_ns, b->enter.seq);
  });
  for (const OpSpan* s : ref_spans) {
    if (!s->payload().src_addrs) {
      throw Error(ErrorCode::kDagUnavailable,
                  "operator spans carry no source addresses; record the session with the str "
                  "flag on to rebuild the graph");
    }
  }

  std::map<Addr, std::vector<const OpSpan*>> all_by_addr;
  for (const auto& [tid, spans] : by_tid) {
    for (const OpSpan* s : spans) all_by_addr[s->op_addr].push_back(s);
  }

  ProfDag dag;
  dag.iteration = n_tar;
  dag.reference_tid = ref;
  dag.pmc_specs = header.pmc_specs;

  int64_t order = 0;
  for (const OpSpan* s : ref_spans) {
    if (dag.nodes.count(s->op_addr)) {
      dag.warnings.push_back("op " + s->op_name + " " + AddrToHex(s->op_addr) +
                             " ran twice on the reference thread; kept the first run");
      continue;
    }
    const OpPayload& p = s->payload();
    OpNode n;
    n.addr = s->op_addr;
    n.op_type = p.op_type;
    n.op_name = p.op_name;
    n.backend = p.backend;
    n.dims = p.dims;
    n.order = order++;
    const std::vector<const OpSpan*>& spans = all_by_addr[s->op_addr];
    n.elapsed_ns = OpElapsed(spans);
    for (const OpSpan* t : spans) {
      if (!t->pmc_delta) continue;
      if (!n.pmc_totals) n.pmc_totals = std::vector<int64_t>(t->pmc_delta->size(), 0);
      for (size_t i = 0; i < n.pmc_totals->size() && i < t->pmc_delta->size(); ++i) {
        (*n.pmc_totals)[i] += (*t->pmc_delta)[i];
      }
    }
    dag.nodes.emplace(n.addr, std::move(n));
  }
  for (const auto& [addr, spans] : all_by_addr) {
    if (dag.nodes.count(addr)) continue;
    dag.warnings.push_back("op " + spans.front()->op_name + " " + AddrToHex(addr) + " ran on tid " +
                           std::to_string(spans.front()->tid) +
                           " but not on the reference thread " + std::to_string(ref) +
                           "; left out of the graph");
  }

  std::map<std::pair<Addr, Addr>, uint32_t> edges;
  std::set<Addr> seen;
  for (const OpSpan* s : ref_spans) {
    if (!seen.insert(s->op_addr).second) continue;
    for (Addr src : *s->payload().src_addrs) {
      ++edges[{src, s->op_addr}];
      if (dag.nodes.count(src)) continue;
      OpNode c;
      c.addr = src;
      c.is_constant = true;
      c.op_type = OpKind::kNone;
      dag.nodes.emplace(src, std::move(c));
    }
  }
  for (const auto& [key, mult] : edges) dag.edges.push_back({key.first, key.second, mult});
  return dag;
}

std::vector<std::string> AvailableMetrics(const ProfDag& dag) {
  std::vector<std::string> out = {"elapsed"};
  const auto& specs = dag.pmc_specs;
  bool refill = FindPmc(specs, kPmcL3dCacheRefill).has_value();
  bool wr = FindPmc(specs, kPmcMemAccessWr).has_value();
  if (refill && wr) out.push_back("bandwidth");
  if (refill) out.push_back("refills");
  if (FindPmc(specs, kPmcCycles) && FindPmc(specs, kPmcIdleBackendCycles)) {
    out.push_back("stalled");
  }
  return out;
}

std::optional<double> NodeMetric(const ProfDag& dag, const OpNode& node, std::string_view metric) {
  std::vector<std::string> available = AvailableMetrics(dag);
  if (std::find(available.begin(), available.end(), metric) == available.end()) {
    std::string list;
    for (const std::string& m : available) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::kMetricUnavailable,
                "metric '" + std::string(metric) + "' is not available; choose one of: " + list);
  }
  if (node.is_constant || !node.elapsed_ns) return std::nullopt;
  if (metric == "elapsed") return static_cast<double>(*node.elapsed_ns);
  if (!node.pmc_totals) return std::nullopt;
  const std::vector<int64_t>& pmc = *node.pmc_totals;
  if (metric == "refills") {
    size_t i = *FindPmc(dag.pmc_specs, kPmcL3dCacheRefill);
    if (i >= pmc.size()) return std::nullopt;
    return static_cast<double>(pmc[i]);
  }
  if (metric == "bandwidth") {
    if (*node.elapsed_ns <= 0) return std::nullopt;
    return ComputeMemoryTraffic(pmc, dag.pmc_specs, *node.elapsed_ns).bandwidth_bytes_per_s;
  }
  // stalled
  size_t c = *FindPmc(dag.pmc_specs, kPmcCycles);
  if (c >= pmc.size() || pmc[c] == 0) return std::nullopt;
  return ComputeStalledRatio(pmc, dag.pmc_specs).ratio;
}

std::vector<std::string> HeatPalette(size_t palette_size) {
  if (palette_size == 0) throw Error(ErrorCode::kDomain, "palette size must be at least 1");
  constexpr int kLight[3] = {0xff, 0xff, 0xcc};
  constexpr int kDark[3] = {0x80, 0x00, 0x26};
  std::vector<std::string> out;
  for (size_t i = 0; i < palette_size; ++i) {
    double t = palette_size == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(palette_size - 1);
    char buf[8];
    int rgb[3];
    for (int c = 0; c < 3; ++c) {
      rgb[c] = static_cast<int>(std::lround(kLight[c] + t * (kDark[c] - kLight[c])));
    }
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    out.emplace_back(buf);
  }
  return out;
}

size_t MetricBucket(double value, double min, double max, size_t palette_size) {
  if (palette_size == 0) throw Error(ErrorCode::kDomain, "palette size must be at least 1");
  if (!(max > min)) return 0;
  double t = (value - min) / (max - min);
  auto b = static_cast<size_t>(std::floor(t * static_cast<double>(palette_size)));
  return std::min(b, palette_size - 1);
}

std::string DotShape(const OpType& type) {
  switch (type.kind()) {
    case OpKind::kMulMat: return "shape=circle";
    case OpKind::kAdd: return "shape=triangle";
    case OpKind::kSoftMax: return "shape=square";
    case OpKind::kRmsNorm: return "shape=hexagon";
    case OpKind::kUnary: return "shape=hexagon, orientation=90";
    case OpKind::kMul: return "shape=octagon";
    case OpKind::kMulMatId: return "shape=doublecircle";
    case OpKind::kRope: return "shape=diamond";
    case OpKind::kCpy: return "shape=parallelogram";
    case OpKind::kGetRows: return "shape=invtriangle";
    default: return "shape=box";
  }
}

std::string ExportDot(const ProfDag& dag, std::string_view metric, size_t palette_size) {
  std::vector<std::string> palette = HeatPalette(palette_size);
  std::vector<const OpNode*> ops = dag.OpsInOrder();
  std::vector<std::optional<double>> values;
  double lo = 0, hi = 0;
  bool any = false;
  for (const OpNode* n : ops) {
    values.push_back(NodeMetric(dag, *n, metric));
    if (!values.back()) continue;
    lo = any ? std::min(lo, *values.back()) : *values.back();
    hi = any ? std::max(hi, *values.back()) : *values.back();
    any = true;
  }

  std::ostringstream os;
  os << "digraph profdag {\n";
  os << "  graph [label=\"iteration " << dag.iteration << ", metric " << metric
     << "\", labelloc=t];\n";
  os << "  node [fontname=\"Helvetica\", fixedsize=false];\n";
  for (size_t i = 0; i < ops.size(); ++i) {
    const OpNode& n = *ops[i];
    os << "  " << NodeId(n.addr) << " [label=\"" << *n.order << ":" << DotEscape(n.op_name)
       << "\", " << DotShape(n.op_type);
    if (values[i]) {
      os << ", style=filled, fillcolor=\"" << palette[MetricBucket(*values[i], lo, hi, palette_size)]
         << "\", tooltip=\"" << metric << "=" << FormatValue(*values[i]) << "\"";
    }
    os << "];\n";
  }
  for (const auto& [addr, n] : dag.nodes) {
    if (!n.is_constant) continue;
    os << "  " << NodeId(addr) << " [label=\"" << AddrToHex(addr)
       << "\", shape=box, style=dashed];\n";
  }
  for (const DagEdge& e : dag.edges) {
    os << "  " << NodeId(e.src) << " -> " << NodeId(e.dst);
    if (e.multiplicity > 1) {
      os << " [multiplicity=" << e.multiplicity << ", label=\"x" << e.multiplicity << "\"]";
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

std::string ExportDagJson(const ProfDag& dag) {
  Json doc;
  doc["iteration"] = dag.iteration;
  doc["reference_tid"] = dag.reference_tid;
  std::vector<std::string> metrics = AvailableMetrics(dag);
  doc["metrics"] = metrics;
  Json specs = Json::array();
  for (const PmcSpec& s : dag.pmc_specs) specs.push_back(s.name);
  doc["pmc_specs"] = specs;

  Json nodes = Json::array();
  auto emit = [&](const OpNode& n) {
    Json j;
    j["addr"] = AddrToHex(n.addr);
    j["is_constant"] = n.is_constant;
    if (!n.is_constant) {
      j["op_type"] = n.op_type.Name();
      j["op_name"] = n.op_name;
      j["backend"] = BackendName(n.backend);
      j["order"] = *n.order;
      j["elapsed_ns"] = *n.elapsed_ns;
      j["dims"] = n.dims ? Json(*n.dims) : Json(nullptr);
      j["pmc_totals"] = n.pmc_totals ? Json(*n.pmc_totals) : Json(nullptr);
      Json values = Json::object();
      for (const std::string& m : metrics) {
        std::optional<double> v = NodeMetric(dag, n, m);
        values[m] = v ? Json(*v) : Json(nullptr);
      }
      j["metric_values"] = values;
    }
    nodes.push_back(std::move(j));
  };
  for (const OpNode* n : dag.OpsInOrder()) emit(*n);
  for (const auto& [addr, n] : dag.nodes) {
    if (n.is_constant) emit(n);
  }
  doc["nodes"] = nodes;

  Json edges = Json::array();
  for (const DagEdge& e : dag.edges) {
    edges.push_back({{"src", AddrToHex(e.src)}, {"dst", AddrToHex(e.dst)},
                     {"multiplicity", e.multiplicity}});
  }
  doc["edges"] = edges;
  doc["warnings"] = dag.warnings;
  return doc.dump(2) + "\n";
}

}  // namespace profinfer
