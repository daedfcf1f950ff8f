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

#ifndef PROFINFER_PROFDAG_H_
#define PROFINFER_PROFDAG_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "profinfer/event_model.h"
#include "profinfer/trace_ingest.h"

namespace profinfer {

struct OpNode {
  Addr addr = 0;
  OpType op_type;
  std::string op_name;
  Backend backend = Backend::kCpu;
  std::optional<Dims> dims;
  // Unset for constant nodes.
  std::optional<int64_t> order;
  std::optional<int64_t> elapsed_ns;
  std::optional<std::vector<int64_t>> pmc_totals;
  bool is_constant = false;

  bool operator==(const OpNode&) const = default;
};

struct DagEdge {
  Addr src = 0;
  Addr dst = 0;
  uint32_t multiplicity = 1;  // times |src| appears in dst's source list

  bool operator==(const DagEdge&) const = default;
  bool operator<(const DagEdge& o) const {
    return src != o.src ? src < o.src : dst < o.dst;
  }
};

struct ProfDag {
  int64_t iteration = 0;
  Tid reference_tid = 0;
  std::map<Addr, OpNode> nodes;
  std::vector<DagEdge> edges;  // sorted, one per (src, dst)
  std::vector<PmcSpec> pmc_specs;
  std::vector<std::string> warnings;

  // Non-constant nodes by order.
  std::vector<const OpNode*> OpsInOrder() const;
};

// Builds the DAG of iteration |n_tar| from the reference thread's op
// sequence. Throws ErrorCode::kUnknownIteration for a bad n_tar and
// ErrorCode::kDagUnavailable when the spans carry no source addresses.
ProfDag BuildProfDag(const IngestResult& ingest, const SessionHeader& header, int64_t n_tar);

// Metric names: "elapsed" always, "refills", "bandwidth" and "stalled" when
// the session recorded the counters they need.
std::vector<std::string> AvailableMetrics(const ProfDag& dag);

// Value of |metric| for |node|; nullopt for constant nodes and nodes lacking
// the inputs. Throws ErrorCode::kMetricUnavailable for an unknown metric.
std::optional<double> NodeMetric(const ProfDag& dag, const OpNode& node, std::string_view metric);

// palette_size colors from light to dark.
std::vector<std::string> HeatPalette(size_t palette_size);

// Min-max normalized bucket in [0, palette_size). A zero range maps to 0.
size_t MetricBucket(double value, double min, double max, size_t palette_size);

// Graphviz shape attributes for an op type.
std::string DotShape(const OpType& type);

std::string ExportDot(const ProfDag& dag, std::string_view metric, size_t palette_size);
std::string ExportDagJson(const ProfDag& dag);

}  // namespace profinfer

#endif  // PROFINFER_PROFDAG_H_
