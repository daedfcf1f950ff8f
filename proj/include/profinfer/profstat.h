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

#ifndef PROFINFER_PROFSTAT_H_
#define PROFINFER_PROFSTAT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profinfer/event_model.h"
#include "profinfer/trace_ingest.h"

namespace profinfer {

// ---------------------------------------------------------------------------
// Across tokens
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& DefaultTokenPatterns() {
  static const auto* patterns = new std::vector<std::string>{"kq", "kqv"};
  return *patterns;
}

// Index of the longest pattern that is a case-insensitive substring of
// |op_name|, or nullopt. Ties go to the earlier pattern.
std::optional<size_t> MatchPattern(std::string_view op_name,
                                   const std::vector<std::string>& patterns);

struct TokenRow {
  int64_t iteration = 0;
  Phase phase = Phase::kDecode;
  int64_t duration_ns = 0;
  std::vector<int64_t> pattern_ns;  // aligned with TokenSeries::patterns
  int64_t op_sum_ns = 0;            // all ops of the iteration
};

struct TokenSeries {
  std::vector<std::string> patterns;
  int64_t ttft_ns = 0;
  std::vector<int64_t> tpot_ns;  // one per decode iteration
  std::vector<TokenRow> rows;    // one per iteration
};

// Throws ErrorCode::kNotFound if the session has no token spans.
TokenSeries ComputeTokenSeries(const IngestResult& ingest,
                               const std::vector<std::string>& patterns);

// ---------------------------------------------------------------------------
// Per operator type
// ---------------------------------------------------------------------------

// M*N*K*H. Throws ErrorCode::kDomain on a zero or negative extent.
int64_t MatmulComplexity(int64_t m, int64_t n, int64_t k, int64_t h);

struct MatMulSample {
  int64_t iteration = 0;
  Phase phase = Phase::kDecode;
  std::string op_name;
  int64_t m = 1, n = 1, k = 1, h = 1;
  int64_t complexity = 0;
  int64_t elapsed_ns = 0;
  std::optional<std::vector<int64_t>> pmc_totals;
  std::optional<double> bandwidth_bytes_per_s;
};

// Every MUL_MAT of every iteration. The output tensor gives N = ne0,
// M = ne1, H = ne2. K is the element count of the activation source (src1,
// else src0) divided by M*H, when that source is an op of the iteration. Ops
// whose K cannot be
// resolved are skipped. Throws ErrorCode::kMetricUnavailable if the trace
// has no tensor dims at all.
std::vector<MatMulSample> CollectMatMulSamples(const IngestResult& ingest,
                                               const SessionHeader& header);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

// Ordinary least squares. Throws ErrorCode::kDegenerateFit when fewer than
// two distinct x values are given, kDomain on length mismatch.
LinearFit FitLinear(std::span<const double> x, std::span<const double> y);

struct MemoryTraffic {
  double bytes_read = 0;
  double bytes_written = 0;
  double bandwidth_bytes_per_s = 0;
};

// Uses the unit multiplier of l3d_cache_refill and mem_access_wr from
// |specs|. Throws kMetricUnavailable naming a missing counter and kDomain
// for a non-positive elapsed time.
MemoryTraffic ComputeMemoryTraffic(std::span<const int64_t> pmc_totals,
                                   const std::vector<PmcSpec>& specs, int64_t elapsed_ns);

struct StalledRatio {
  double ratio = 0;
  bool anomaly = false;  // ratio > 1: counters are not consistent
};

// Throws kDomain when cycles == 0.
StalledRatio ComputeStalledRatio(int64_t idle_backend_cycles, int64_t cycles);
// Looks up cycles and idle-backend-cycles in |specs|.
StalledRatio ComputeStalledRatio(std::span<const int64_t> pmc_totals,
                                 const std::vector<PmcSpec>& specs);

// Position of |name| in |specs|, or nullopt.
std::optional<size_t> FindPmc(const std::vector<PmcSpec>& specs, std::string_view name);

// One operator of one iteration with the memory and stall figures its
// counters allow; fields stay empty when the counters were not recorded.
struct OpStatRow {
  int64_t iteration = 0;
  Phase phase = Phase::kDecode;
  std::string op_name;
  OpType op_type;
  Backend backend = Backend::kCpu;
  int64_t elapsed_ns = 0;
  std::optional<MemoryTraffic> traffic;
  std::optional<StalledRatio> stalled;
};

std::vector<OpStatRow> CollectOpStats(const IngestResult& ingest, const SessionHeader& header);

// ---------------------------------------------------------------------------
// Across experts
// ---------------------------------------------------------------------------

// For row i: mean over its experts of (i - last row that used the expert),
// where an expert never used before counts i + 1.
std::vector<double> ReuseDistances(const std::vector<std::vector<uint32_t>>& rows);

struct ExpertRow {
  int64_t iteration = 0;
  std::vector<uint32_t> expert_ids;
  int64_t elapsed_ns = 0;
  double avg_distance = 0;
};

struct ExpertActivationMatrix {
  std::string op_name;
  size_t k = 0;
  uint32_t expert_count = 0;  // largest observed id + 1
  std::vector<ExpertRow> rows;              // decode iterations, in order
  std::map<uint32_t, uint64_t> activations;
  std::map<uint32_t, double> density;       // activations / rows
};

// Rows come from the decode iterations in which |gated_op_name| ran with
// expert ids. Throws ErrorCode::kNotFound listing the gated ops present.
ExpertActivationMatrix AnalyzeExperts(const IngestResult& ingest, std::string_view gated_op_name);

std::vector<std::string> GatedOpNames(const IngestResult& ingest);

double PearsonCorrelation(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

std::string TokensCsv(const TokenSeries& series);
std::string MatMulsCsv(const std::vector<MatMulSample>& samples);
std::string OpsCsv(const std::vector<OpStatRow>& rows);
std::string ExpertsCsv(const ExpertActivationMatrix& m);
std::string ExpertDensityCsv(const ExpertActivationMatrix& m);

std::string TokensPlotSpec(const TokenSeries& series);
std::string MatMulsPlotSpec(const std::vector<MatMulSample>& samples);
std::string ExpertsPlotSpec(const ExpertActivationMatrix& m);

}  // namespace profinfer

#endif  // PROFINFER_PROFSTAT_H_
