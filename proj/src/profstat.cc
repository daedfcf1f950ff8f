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

#include "profinfer/profstat.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "profinfer/error.h"

namespace profinfer {

namespace {

using Json = nlohmann::ordered_json;

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string Num(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

template <typename T>
std::string JoinSpace(const std::vector<T>& values) {
  std::string out;
  for (const T& v : values) {
    if (!out.empty()) out += ' ';
    if constexpr (std::is_floating_point_v<T>) {
      out += Num(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

Json Series(const std::string& name, const Json& x, const Json& y) {
  return Json{{"name", name}, {"x", x}, {"y", y}};
}

}  // namespace

std::optional<size_t> MatchPattern(std::string_view op_name,
                                   const std::vector<std::string>& patterns) {
  std::string name = Lower(op_name);
  std::optional<size_t> best;
  for (size_t i = 0; i < patterns.size(); ++i) {
    if (patterns[i].empty()) continue;
    if (name.find(Lower(patterns[i])) == std::string::npos) continue;
    if (!best || patterns[i].size() > patterns[*best].size()) best = i;
  }
  return best;
}

TokenSeries ComputeTokenSeries(const IngestResult& ingest,
                               const std::vector<std::string>& patterns) {
  if (ingest.iterations.empty()) {
    throw Error(ErrorCode::kNotFound, "no token spans in the session; was the token level traced?");
  }
  TokenSeries ts;
  ts.patterns = patterns;
  ts.ttft_ns = ingest.iterations.front().duration_ns();
  for (const IterationIndex& it : ingest.iterations) {
    TokenRow row;
    row.iteration = it.iteration;
    row.phase = it.phase;
    row.duration_ns = it.duration_ns();
    row.pattern_ns.assign(patterns.size(), 0);
    for (const OpAggregate& op : AggregateOps(ingest, it.iteration)) {
      row.op_sum_ns += op.elapsed_ns;
      if (auto p = MatchPattern(op.op_name, patterns)) row.pattern_ns[*p] += op.elapsed_ns;
    }
    if (it.phase == Phase::kDecode) ts.tpot_ns.push_back(row.duration_ns);
    ts.rows.push_back(std::move(row));
  }
  return ts;
}

int64_t MatmulComplexity(int64_t m, int64_t n, int64_t k, int64_t h) {
  if (m <= 0 || n <= 0 || k <= 0 || h <= 0) {
    throw Error(ErrorCode::kDomain, "matmul extents must be positive (M=" + std::to_string(m) +
                                        " N=" + std::to_string(n) + " K=" + std::to_string(k) +
                                        " H=" + std::to_string(h) + ")");
  }
  return m * n * k * h;
}

std::vector<MatMulSample> CollectMatMulSamples(const IngestResult& ingest,
                                               const SessionHeader& header) {
  std::vector<MatMulSample> out;
  bool any_dims = false;
  for (const IterationIndex& it : ingest.iterations) {
    std::vector<OpAggregate> ops = AggregateOps(ingest, it.iteration);
    std::unordered_map<Addr, const OpAggregate*> by_addr;
    for (const OpAggregate& op : ops) by_addr[op.op_addr] = &op;
    for (const OpAggregate& op : ops) {
      if (op.dims) any_dims = true;
      if (op.op_type != OpKind::kMulMat || !op.dims || !op.src_addrs) continue;
      const Dims& d = *op.dims;
      const int64_t m = d[1];
      const int64_t h = std::max<int64_t>(1, d[2]);
      // The activation operand holds K x M x H elements; this also covers
      // inputs whose heads have not been merged into ne0 yet.
      std::optional<int64_t> k;
      const std::vector<Addr>& srcs = *op.src_addrs;
      for (size_t idx : {size_t{1}, size_t{0}}) {
        if (idx >= srcs.size()) continue;
        auto src = by_addr.find(srcs[idx]);
        if (src == by_addr.end() || !src->second->dims) continue;
        int64_t elems = 1;
        for (int64_t e : *src->second->dims) elems *= std::max<int64_t>(1, e);
        if (m > 0 && elems % (m * h) == 0) {
          k = elems / (m * h);
          break;
        }
      }
      if (!k) continue;
      MatMulSample s;
      s.iteration = it.iteration;
      s.phase = it.phase;
      s.op_name = op.op_name;
      s.n = d[0];
      s.m = m;
      s.h = h;
      s.k = *k;
      s.complexity = MatmulComplexity(s.m, s.n, s.k, s.h);
      s.elapsed_ns = op.elapsed_ns;
      s.pmc_totals = op.pmc_totals;
      if (s.pmc_totals && s.elapsed_ns > 0 && FindPmc(header.pmc_specs, kPmcL3dCacheRefill) &&
          FindPmc(header.pmc_specs, kPmcMemAccessWr)) {
        s.bandwidth_bytes_per_s =
            ComputeMemoryTraffic(*s.pmc_totals, header.pmc_specs, s.elapsed_ns)
                .bandwidth_bytes_per_s;
      }
      out.push_back(std::move(s));
    }
  }
  if (!any_dims && !ingest.spans.empty()) {
    throw Error(ErrorCode::kMetricUnavailable,
                "the trace has no tensor dims; record it with the str flag on");
  }
  return out;
}

LinearFit FitLinear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDomain, "x and y differ in length");
  using LD = long double;
  size_t n = x.size();
  LD xm = 0, ym = 0;
  for (size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  if (n > 0) {
    xm /= static_cast<LD>(n);
    ym /= static_cast<LD>(n);
  }
  LD sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    LD dx = x[i] - xm;
    LD dy = y[i] - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (n < 2 || sxx == 0) {
    throw Error(ErrorCode::kDegenerateFit, "linear fit needs at least two distinct x values");
  }
  LD slope = sxy / sxx;
  LD intercept = ym - slope * xm;
  LD ss_res = 0;
  for (size_t i = 0; i < n; ++i) {
    LD r = y[i] - (slope * x[i] + intercept);
    ss_res += r * r;
  }
  LinearFit f;
  f.slope = static_cast<double>(slope);
  f.intercept = static_cast<double>(intercept);
  if (syy == 0) {
    f.r2 = ss_res == 0 ? 1.0 : 0.0;
  } else {
    // Exact data can leave a residual of a few ulps; clamp to the valid range.
    f.r2 = static_cast<double>(std::clamp<LD>(1 - ss_res / syy, 0, 1));
  }
  return f;
}

std::optional<size_t> FindPmc(const std::vector<PmcSpec>& specs, std::string_view name) {
  for (size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<OpStatRow> CollectOpStats(const IngestResult& ingest, const SessionHeader& header) {
  const bool traffic = FindPmc(header.pmc_specs, kPmcL3dCacheRefill) &&
                       FindPmc(header.pmc_specs, kPmcMemAccessWr);
  const bool stalls =
      FindPmc(header.pmc_specs, kPmcCycles) && FindPmc(header.pmc_specs, kPmcIdleBackendCycles);
  std::vector<OpStatRow> out;
  for (const IterationIndex& it : ingest.iterations) {
    for (const OpAggregate& op : AggregateOps(ingest, it.iteration)) {
      OpStatRow r;
      r.iteration = it.iteration;
      r.phase = it.phase;
      r.op_name = op.op_name;
      r.op_type = op.op_type;
      r.backend = op.backend;
      r.elapsed_ns = op.elapsed_ns;
      if (op.pmc_totals) {
        if (traffic && op.elapsed_ns > 0) {
          r.traffic = ComputeMemoryTraffic(*op.pmc_totals, header.pmc_specs, op.elapsed_ns);
        }
        if (stalls && (*op.pmc_totals)[*FindPmc(header.pmc_specs, kPmcCycles)] > 0) {
          r.stalled = ComputeStalledRatio(*op.pmc_totals, header.pmc_specs);
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

size_t RequirePmc(const std::vector<PmcSpec>& specs, std::span<const int64_t> totals,
                  std::string_view name) {
  std::optional<size_t> i = FindPmc(specs, name);
  if (!i) {
    throw Error(ErrorCode::kMetricUnavailable,
                "counter '" + std::string(name) + "' is not in the session's counter list");
  }
  if (*i >= totals.size()) {
    throw Error(ErrorCode::kMetricUnavailable,
                "no reading for counter '" + std::string(name) + "'");
  }
  return *i;
}

}  // namespace

MemoryTraffic ComputeMemoryTraffic(std::span<const int64_t> pmc_totals,
                                   const std::vector<PmcSpec>& specs, int64_t elapsed_ns) {
  size_t rd = RequirePmc(specs, pmc_totals, kPmcL3dCacheRefill);
  size_t wr = RequirePmc(specs, pmc_totals, kPmcMemAccessWr);
  if (elapsed_ns <= 0) throw Error(ErrorCode::kDomain, "elapsed time must be positive");
  MemoryTraffic t;
  t.bytes_read = static_cast<double>(pmc_totals[rd]) * static_cast<double>(specs[rd].unit.multiplier);
  t.bytes_written =
      static_cast<double>(pmc_totals[wr]) * static_cast<double>(specs[wr].unit.multiplier);
  t.bandwidth_bytes_per_s = (t.bytes_read + t.bytes_written) * 1e9 / static_cast<double>(elapsed_ns);
  return t;
}

StalledRatio ComputeStalledRatio(int64_t idle_backend_cycles, int64_t cycles) {
  if (cycles == 0) throw Error(ErrorCode::kDomain, "cycle count is zero");
  StalledRatio r;
  r.ratio = static_cast<double>(idle_backend_cycles) / static_cast<double>(cycles);
  r.anomaly = r.ratio > 1.0 || r.ratio < 0.0;
  return r;
}

StalledRatio ComputeStalledRatio(std::span<const int64_t> pmc_totals,
                                 const std::vector<PmcSpec>& specs) {
  size_t idle = RequirePmc(specs, pmc_totals, kPmcIdleBackendCycles);
  size_t cycles = RequirePmc(specs, pmc_totals, kPmcCycles);
  return ComputeStalledRatio(pmc_totals[idle], pmc_totals[cycles]);
}

std::vector<double> ReuseDistances(const std::vector<std::vector<uint32_t>>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  std::unordered_map<uint32_t, size_t> last_seen;
  for (size_t i = 0; i < rows.size(); ++i) {
    double sum = 0;
    for (uint32_t e : rows[i]) {
      auto it = last_seen.find(e);
      sum += it == last_seen.end() ? static_cast<double>(i + 1) : static_cast<double>(i - it->second);
    }
    out.push_back(rows[i].empty() ? 0.0 : sum / static_cast<double>(rows[i].size()));
    for (uint32_t e : rows[i]) last_seen[e] = i;
  }
  return out;
}

std::vector<std::string> GatedOpNames(const IngestResult& ingest) {
  std::set<std::string> names;
  for (const OpSpan& s : ingest.spans) {
    if (s.op_type == OpKind::kMulMatId && s.payload().expert_ids) names.insert(s.op_name);
  }
  return {names.begin(), names.end()};
}

ExpertActivationMatrix AnalyzeExperts(const IngestResult& ingest, std::string_view gated_op_name) {
  std::map<int64_t, std::vector<const OpSpan*>> by_iter;
  for (const OpSpan& s : ingest.spans) {
    if (s.op_name != gated_op_name || s.op_type != OpKind::kMulMatId) continue;
    if (!s.payload().expert_ids) continue;
    const IterationIndex* it = ingest.FindIteration(s.iteration);
    if (it == nullptr || it->phase != Phase::kDecode) continue;
    by_iter[s.iteration].push_back(&s);
  }
  if (by_iter.empty()) {
    std::string available;
    for (const std::string& n : GatedOpNames(ingest)) available += (available.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::kNotFound,
                "no decode spans with expert ids for op '" + std::string(gated_op_name) +
                    "'; gated ops present: " + (available.empty() ? "(none)" : available));
  }
  ExpertActivationMatrix m;
  m.op_name = std::string(gated_op_name);
  std::vector<std::vector<uint32_t>> ids;
  for (auto& [iteration, spans] : by_iter) {
    std::sort(spans.begin(), spans.end(), [](const OpSpan* a, const OpSpan* b) {
      return std::tie(a->enter.ts_ns, a->enter.seq) < std::tie(b->enter.ts_ns, b->enter.seq);
    });
    ExpertRow row;
    row.iteration = iteration;
    row.expert_ids = *spans.front()->payload().expert_ids;
    row.elapsed_ns = OpElapsed(spans);
    ids.push_back(row.expert_ids);
    m.rows.push_back(std::move(row));
  }
  std::vector<double> dist = ReuseDistances(ids);
  for (size_t i = 0; i < m.rows.size(); ++i) {
    m.rows[i].avg_distance = dist[i];
    for (uint32_t e : m.rows[i].expert_ids) {
      ++m.activations[e];
      m.expert_count = std::max(m.expert_count, e + 1);
    }
  }
  m.k = m.rows.front().expert_ids.size();
  for (const auto& [e, n] : m.activations) {
    m.density[e] = static_cast<double>(n) / static_cast<double>(m.rows.size());
  }
  return m;
}

double PearsonCorrelation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kDomain, "correlation needs two equal-length series of 2+ values");
  }
  using LD = long double;
  LD xm = 0, ym = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= static_cast<LD>(x.size());
  ym /= static_cast<LD>(y.size());
  LD sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    syy += (y[i] - ym) * (y[i] - ym);
    sxy += (x[i] - xm) * (y[i] - ym);
  }
  if (sxx == 0 || syy == 0) throw Error(ErrorCode::kDegenerateFit, "a series is constant");
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

std::string TokensCsv(const TokenSeries& s) {
  std::ostringstream os;
  os << "iter,phase,duration_ns";
  for (const std::string& p : s.patterns) os << ',' << p;
  os << '\n';
  for (const TokenRow& r : s.rows) {
    os << r.iteration << ',' << PhaseName(r.phase) << ',' << r.duration_ns;
    for (int64_t v : r.pattern_ns) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

std::string MatMulsCsv(const std::vector<MatMulSample>& samples) {
  std::ostringstream os;
  os << "name,M,N,K,H,complexity,elapsed_ns,bandwidth,iter,phase\n";
  for (const MatMulSample& s : samples) {
    os << s.op_name << ',' << s.m << ',' << s.n << ',' << s.k << ',' << s.h << ','
       << s.complexity << ',' << s.elapsed_ns << ','
       << (s.bandwidth_bytes_per_s ? Num(*s.bandwidth_bytes_per_s) : "") << ',' << s.iteration
       << ',' << PhaseName(s.phase) << '\n';
  }
  return os.str();
}

std::string OpsCsv(const std::vector<OpStatRow>& rows) {
  std::ostringstream os;
  os << "iter,phase,name,op_type,backend,elapsed_ns,bytes_read,bytes_written,bandwidth,"
        "stalled_ratio\n";
  for (const OpStatRow& r : rows) {
    os << r.iteration << ',' << PhaseName(r.phase) << ',' << r.op_name << ','
       << r.op_type.Name() << ',' << BackendName(r.backend) << ',' << r.elapsed_ns << ',';
    if (r.traffic) {
      os << Num(r.traffic->bytes_read) << ',' << Num(r.traffic->bytes_written) << ','
         << Num(r.traffic->bandwidth_bytes_per_s);
    } else {
      os << ",,";
    }
    os << ',' << (r.stalled ? Num(r.stalled->ratio) : "") << '\n';
  }
  return os.str();
}

std::string ExpertsCsv(const ExpertActivationMatrix& m) {
  std::ostringstream os;
  os << "iter,expert_ids,elapsed_ns,avg_distance,density\n";
  for (const ExpertRow& r : m.rows) {
    std::vector<double> d;
    for (uint32_t e : r.expert_ids) d.push_back(m.density.at(e));
    os << r.iteration << ',' << JoinSpace(r.expert_ids) << ',' << r.elapsed_ns << ','
       << Num(r.avg_distance) << ',' << JoinSpace(d) << '\n';
  }
  return os.str();
}

std::string ExpertDensityCsv(const ExpertActivationMatrix& m) {
  std::ostringstream os;
  os << "expert,activations,density\n";
  for (uint32_t e = 0; e < m.expert_count; ++e) {
    auto it = m.activations.find(e);
    uint64_t n = it == m.activations.end() ? 0 : it->second;
    os << e << ',' << n << ',' << Num(m.density.count(e) ? m.density.at(e) : 0.0) << '\n';
  }
  return os.str();
}

std::string TokensPlotSpec(const TokenSeries& s) {
  Json x = Json::array(), dur = Json::array();
  std::vector<Json> per_pattern(s.patterns.size(), Json::array());
  for (const TokenRow& r : s.rows) {
    if (r.phase != Phase::kDecode) continue;
    x.push_back(r.iteration);
    dur.push_back(static_cast<double>(r.duration_ns) / 1e6);
    for (size_t i = 0; i < s.patterns.size(); ++i) {
      per_pattern[i].push_back(static_cast<double>(r.pattern_ns[i]) / 1e6);
    }
  }
  Json series = Json::array({Series("tpot", x, dur)});
  for (size_t i = 0; i < s.patterns.size(); ++i) series.push_back(Series(s.patterns[i], x, per_pattern[i]));
  Json doc{{"view", "tokens"},
           {"x_label", "decode iteration"},
           {"y_label", "time (ms)"},
           {"ttft_ms", static_cast<double>(s.ttft_ns) / 1e6},
           {"series", series}};
  return doc.dump(2) + "\n";
}

std::string MatMulsPlotSpec(const std::vector<MatMulSample>& samples) {
  Json x = Json::array(), y = Json::array();
  std::vector<double> xs, ys;
  for (const MatMulSample& s : samples) {
    if (s.phase != Phase::kDecode) continue;
    xs.push_back(static_cast<double>(s.complexity));
    ys.push_back(static_cast<double>(s.elapsed_ns));
    x.push_back(xs.back());
    y.push_back(ys.back());
  }
  Json doc{{"view", "ops"},
           {"x_label", "complexity (M*N*K*H)"},
           {"y_label", "elapsed (ns)"},
           {"series", Json::array({Series("MUL_MAT", x, y)})}};
  try {
    LinearFit f = FitLinear(xs, ys);
    doc["fit"] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
  } catch (const Error&) {
    doc["fit"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

std::string ExpertsPlotSpec(const ExpertActivationMatrix& m) {
  Json x = Json::array(), dist = Json::array(), elapsed = Json::array();
  for (const ExpertRow& r : m.rows) {
    x.push_back(r.iteration);
    dist.push_back(r.avg_distance);
    elapsed.push_back(static_cast<double>(r.elapsed_ns) / 1e3);
  }
  Json ex = Json::array(), dens = Json::array();
  for (const auto& [e, d] : m.density) {
    ex.push_back(e);
    dens.push_back(d);
  }
  Json doc{{"view", "experts"},
           {"op", m.op_name},
           {"k", m.k},
           {"x_label", "decode iteration"},
           {"y_label", "avg reuse distance / elapsed (us)"},
           {"series", Json::array({Series("avg_distance", x, dist),
                                   Series("elapsed_us", x, elapsed),
                                   Series("density", ex, dens)})}};
  return doc.dump(2) + "\n";
}

}  // namespace profinfer
