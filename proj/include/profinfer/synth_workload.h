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

#ifndef PROFINFER_SYNTH_WORKLOAD_H_
#define PROFINFER_SYNTH_WORKLOAD_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "profinfer/config.h"
#include "profinfer/event_model.h"
#include "profinfer/profdag.h"
#include "profinfer/trace_ingest.h"

namespace profinfer {

enum class ModelVariant : uint8_t { kDense, kMoe };

struct ModelSpec {
  std::string name = "dense2";
  int64_t layers = 2;
  int64_t hidden_dim = 256;
  int64_t heads = 8;
  int64_t kv_heads = 4;
  int64_t ffn_dim = 512;  // per expert for MoE
  int64_t vocab = 2048;
  ModelVariant variant = ModelVariant::kDense;
  uint32_t total_experts = 0;
  uint32_t experts_per_token = 0;
  bool gemma_style = false;  // softcap, extra softmaxes, post-attention norm
  bool qwen_style = false;   // bias ADD after the Q, K and V projections

  int64_t head_dim() const { return hidden_dim / heads; }
  int64_t kv_dim() const { return head_dim() * kv_heads; }
};

// Throws ErrorCode::kConfig naming the first broken constraint.
void ValidateModelSpec(const ModelSpec& model);

// "dense2", "llama", "qwen", "gemma", "moe"; nullopt for anything else.
std::optional<ModelSpec> ModelPreset(std::string_view name);
std::vector<std::string> ModelPresetNames();

// All durations in ns. MUL_MAT ops cost ns_per_unit_complexity * M*N*K*H +
// per_op_overhead_ns + matmul_ns_per_hidden * hidden_dim (the GPU divides
// the first term by gpu_speedup); other ops cost per_op_overhead_ns +
// elementwise_ns_per_elem * output elements.
struct CostModel {
  double ns_per_unit_complexity = 0.0625;
  int64_t per_op_overhead_ns = 2000;
  int64_t matmul_ns_per_hidden = 2;
  double elementwise_ns_per_elem = 0.125;
  double gpu_speedup = 2.0;
  // Added to KQ and KQV per cached (padded) token.
  int64_t kq_growth_ns_per_token = 0;
  // Added to MUL_MAT_ID per unit of average expert reuse distance.
  int64_t expert_miss_penalty_ns = 1000;

  int64_t inter_op_gap_ns = 500;
  int64_t graph_gap_ns = 1000;
  int64_t token_pre_ns = 40000;   // tokenize, graph build
  int64_t token_post_ns = 60000;  // sampling
  int64_t token_gap_ns = 100000;
  int64_t max_jitter_ns = 200;

  // PMC model: counts are linear in bytes touched plus a per-op constant.
  int64_t refills_per_op = 8;
  int64_t writes_per_op = 2;
  int64_t cycles_per_ns = 2;
};

struct BusyInterval {
  int64_t iteration = 1;
  int64_t offset_ns = 0;  // from the token enter of |iteration|
  int64_t duration_ns = 0;
};

// A foreign task occupies |cpu| during each interval. The inference thread
// pinned there is preempted, woken on the next worker's cpu, shares it by
// time slicing, and returns once the foreign task leaves.
struct InterferenceSpec {
  uint32_t cpu = 6;
  std::vector<BusyInterval> intervals;
};

struct RunSpec {
  int64_t prompt_len = 8;
  int64_t gen_len = 4;  // decode iterations after the prefill
  uint32_t nthreads = 4;
  ProbeFlags flags{true, true, true};
  CostModel cost;
  int64_t kv_step = 32;  // cached context is padded to a multiple of this
  // The last gpu_layers layers and the output head run on the OpenCL GPU.
  int64_t gpu_layers = 0;
  double drop_rate = 0.0;  // probability of losing each op record
  bool sched_events = false;
  std::optional<InterferenceSpec> interference;
  uint64_t seed = 1;
};

void ValidateRunSpec(const RunSpec& run, const ModelSpec& model);

// [model] and [run] sections in the same syntax as the tracer config.
// model.preset picks a base spec that the other keys then override.
std::pair<ModelSpec, RunSpec> SynthSpecFromTable(const ConfigTable& table);

inline constexpr Pid kSynthPid = 999;
inline constexpr Tid kSynthMainTid = 1000;
inline constexpr Tid kSynthForeignTid = 5000;
inline constexpr Pid kSynthForeignPid = 4999;
inline constexpr char kSynthCpuGuid[] = "00000000000c0001";
inline constexpr char kSynthGpuGuid[] = "00000000000c1002";

// One operator of one iteration as the generator scheduled it.
struct TruthOp {
  Addr addr = 0;
  std::string name;
  OpType type;
  Backend backend = Backend::kCpu;
  Dims dims{};
  std::vector<Addr> srcs;
  int64_t start_ns = 0;
  int64_t elapsed_ns = 0;
  std::optional<std::vector<int64_t>> pmc_totals;
  // Matmul extents; zero for other ops.
  int64_t m = 0, n = 0, k = 0, h = 0;
  int64_t complexity = 0;
  std::optional<std::vector<uint32_t>> expert_ids;
  double expert_avg_distance = 0;
};

struct TruthIteration {
  int64_t iteration = 0;
  Phase phase = Phase::kDecode;
  uint32_t batch_size = 1;
  int64_t duration_ns = 0;
  int64_t op_sum_ns = 0;
  int64_t overhead_ns = 0;  // duration - op_sum
  std::vector<TruthOp> ops;  // execution order
  ProfDag dag;
};

struct GroundTruth {
  std::vector<TruthIteration> iterations;
  int64_t ttft_ns = 0;
  std::vector<int64_t> tpot_ns;
  // Gated op name -> expert ids per iteration, prefill included.
  std::map<std::string, std::vector<std::vector<uint32_t>>> expert_schedule;
  std::vector<uint64_t> dropped_seqs;  // sorted
};

// pre + post + one gap per op + two graph gaps per partition.
int64_t IterationOverheadNs(const CostModel& cost, size_t n_ops, size_t n_partitions);

struct SynthOutput {
  TraceSession session;
  GroundTruth truth;
};

SynthOutput GenerateSession(const ModelSpec& model, const RunSpec& run);

}  // namespace profinfer

#endif  // PROFINFER_SYNTH_WORKLOAD_H_
