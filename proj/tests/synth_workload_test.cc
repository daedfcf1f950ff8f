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

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "profinfer/error.h"
#include "profinfer/event_model.h"
#include "profinfer/profdag.h"
#include "profinfer/session_io.h"
#include "profinfer/synth_workload.h"
#include "profinfer/trace_ingest.h"
#include "testing/random_specs.h"

namespace profinfer {
namespace {

// One dense transformer layer, enumerated by hand: name, type, number of
// sources.
struct BlockOp {
  const char* name;
  const char* type;
  int srcs;
};
constexpr BlockOp kDenseLayer[] = {
    {"attn_norm", "RMS_NORM", 2}, {"Qcur", "MUL_MAT", 2},      {"Qcur_rope", "ROPE", 2},
    {"Kcur", "MUL_MAT", 2},       {"Kcur_rope", "ROPE", 2},    {"Vcur", "MUL_MAT", 2},
    {"kq", "MUL_MAT", 2},         {"kq_soft_max", "SOFT_MAX", 1}, {"kqv", "MUL_MAT", 2},
    {"attn_out", "MUL_MAT", 2},   {"ffn_inp", "ADD", 2},       {"ffn_norm", "RMS_NORM", 2},
    {"ffn_up", "MUL_MAT", 2},     {"ffn_gate", "MUL_MAT", 2},  {"ffn_silu", "UNARY", 1},
    {"ffn_gate_par", "MUL", 2},   {"ffn_out", "MUL_MAT", 2},   {"l_out", "ADD", 2},
};
// Weights read by one layer: attention norm, wq, wk, wv, wo, ffn norm, up,
// gate, down.
constexpr int kDenseLayerWeights = 9;
// Token embeddings, positions, output norm weight, LM head weight.
constexpr int kGlobalConstants = 4;
constexpr BlockOp kHead[] = {{"result_norm", "RMS_NORM", 2}, {"result_output", "MUL_MAT", 2}};

TEST(GenerateSession, DenseTwoLayerMatchesHandEnumeration) {
  ModelSpec model = *ModelPreset("dense2");
  ASSERT_EQ(model.layers, 2);
  RunSpec run;
  run.gen_len = 1;
  SynthOutput out = GenerateSession(model, run);
  ASSERT_EQ(out.truth.iterations.size(), 2u);
  const TruthIteration& it = out.truth.iterations[1];

  std::vector<std::pair<std::string, std::string>> expected;
  size_t edges = 0;
  for (int l = 0; l < 2; ++l) {
    for (const BlockOp& op : kDenseLayer) {
      expected.emplace_back(std::string(op.name) + "-" + std::to_string(l), op.type);
      edges += op.srcs;
    }
  }
  for (const BlockOp& op : kHead) {
    expected.emplace_back(op.name, op.type);
    edges += op.srcs;
  }
  std::vector<std::pair<std::string, std::string>> got;
  for (const TruthOp& op : it.ops) got.emplace_back(op.name, op.type.Name());
  EXPECT_EQ(got, expected);

  ProfDag dag = BuildProfDag(Ingest(out.session), out.session.header, 1);
  EXPECT_EQ(dag.nodes.size(), expected.size() + 2 * kDenseLayerWeights + kGlobalConstants);
  EXPECT_EQ(dag.edges.size(), edges);
  EXPECT_EQ(dag.nodes.size(), 60u);
  EXPECT_EQ(dag.edges.size(), 72u);
}

TEST(GenerateSession, QwenAddsBiasAfterEachProjection) {
  SynthOutput out = GenerateSession(*ModelPreset("qwen"), RunSpec{});
  const std::vector<TruthOp>& ops = out.truth.iterations[1].ops;
  for (const char* proj : {"Qcur-0", "Kcur-0", "Vcur-0"}) {
    auto it = std::find_if(ops.begin(), ops.end(), [&](const TruthOp& o) { return o.name == proj; });
    ASSERT_NE(it, ops.end());
    ASSERT_NE(std::next(it), ops.end());
    EXPECT_EQ(std::next(it)->type, OpType(OpKind::kAdd));
    EXPECT_EQ(std::next(it)->srcs.front(), it->addr);
  }
}

TEST(GenerateSession, MoeIdsAreInRange) {
  ModelSpec model = *ModelPreset("moe");
  ASSERT_EQ(model.total_experts, 60u);
  ASSERT_EQ(model.experts_per_token, 4u);
  SynthOutput out = GenerateSession(model, RunSpec{});
  EXPECT_EQ(out.session.header.experts_per_token, 4u);
  size_t checked = 0;
  for (const RawEvent& e : out.session.events) {
    if (!e.op() || e.op()->op_type != OpKind::kMulMatId) continue;
    ASSERT_TRUE(e.op()->expert_ids.has_value());
    EXPECT_EQ(e.op()->expert_ids->size(), 4u);
    std::set<uint32_t> distinct(e.op()->expert_ids->begin(), e.op()->expert_ids->end());
    EXPECT_EQ(distinct.size(), 4u);
    for (uint32_t id : *e.op()->expert_ids) EXPECT_LT(id, 60u);
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(GenerateSession, LosslessRunHasNoOrphans) {
  RunSpec run;
  run.drop_rate = 0;
  SynthOutput out = GenerateSession(*ModelPreset("moe"), run);
  EXPECT_TRUE(Ingest(out.session).orphans.empty());
  EXPECT_TRUE(out.truth.dropped_seqs.empty());
}

TEST(GenerateSession, DropsAreRecorded) {
  RunSpec run;
  run.drop_rate = 0.05;
  run.flags.perf_buffer = true;
  SynthOutput out = GenerateSession(*ModelPreset("dense2"), run);
  ASSERT_FALSE(out.truth.dropped_seqs.empty());
  std::set<uint64_t> present;
  for (const RawEvent& e : out.session.events) present.insert(e.seq);
  for (uint64_t d : out.truth.dropped_seqs) EXPECT_EQ(present.count(d), 0u);
  EXPECT_EQ(out.session.header.lost_events, out.truth.dropped_seqs.size());
  EXPECT_EQ(present.size() + out.truth.dropped_seqs.size(), *present.rbegin() + 1);
}

TEST(GenerateSession, Deterministic) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 5; ++i) {
    testing::RandomSpec spec = testing::DrawSpec(rng);
    spec.run.drop_rate = 0.02;
    std::string a = EncodeSessionBinary(GenerateSession(spec.model, spec.run).session);
    std::string b = EncodeSessionBinary(GenerateSession(spec.model, spec.run).session);
    EXPECT_EQ(a, b) << spec.Describe();
    spec.run.seed += 1;
    std::string c = EncodeSessionBinary(GenerateSession(spec.model, spec.run).session);
    EXPECT_NE(a, c) << spec.Describe();
  }
}

TEST(GenerateSession, PropertyDurationIsOpsPlusOverhead) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 20; ++i) {
    testing::RandomSpec spec = testing::DrawSpec(rng);
    SynthOutput out = GenerateSession(spec.model, spec.run);
    IngestResult ingest = Ingest(out.session);
    ASSERT_EQ(ingest.iterations.size(), out.truth.iterations.size());
    size_t partitions = spec.run.gpu_layers > 0 ? 2 : 1;
    for (size_t k = 0; k < ingest.iterations.size(); ++k) {
      const TruthIteration& t = out.truth.iterations[k];
      int64_t sum = 0;
      for (const TruthOp& op : t.ops) sum += op.elapsed_ns;
      EXPECT_EQ(t.op_sum_ns, sum);
      EXPECT_EQ(t.overhead_ns, IterationOverheadNs(spec.run.cost, t.ops.size(), partitions));
      EXPECT_EQ(t.duration_ns, sum + t.overhead_ns);
      EXPECT_EQ(ingest.iterations[k].duration_ns(), t.duration_ns) << spec.Describe();
    }
  }
}

TEST(GenerateSession, PropertyValidSessions) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 30; ++i) {
    testing::RandomSpec spec = testing::DrawSpec(rng);
    SynthOutput out = GenerateSession(spec.model, spec.run);
    std::vector<Violation> v = ValidateSession(out.session);
    EXPECT_TRUE(v.empty()) << spec.Describe() << ": " << v.front().message;
    // Batch sizes: prompt length, then one token per decode.
    IngestResult ingest = Ingest(out.session);
    EXPECT_EQ(ingest.iterations[0].batch_size, static_cast<uint32_t>(spec.run.prompt_len));
    for (size_t k = 1; k < ingest.iterations.size(); ++k) {
      EXPECT_EQ(ingest.iterations[k].batch_size, 1u);
    }
  }
}

TEST(GenerateSession, CountersOnlyOnCpuOps) {
  RunSpec run;
  run.gpu_layers = 1;
  SynthOutput out = GenerateSession(*ModelPreset("dense2"), run);
  size_t gpu = 0;
  for (const RawEvent& e : out.session.events) {
    if (!e.op()) continue;
    EXPECT_EQ(e.op()->pmc.has_value(), e.op()->backend == Backend::kCpu);
    if (e.op()->backend == Backend::kOpenClGpu) {
      ++gpu;
      EXPECT_EQ(e.tid, kSynthMainTid);
    }
  }
  EXPECT_GT(gpu, 0u);
}

TEST(ModelSpec, Validation) {
  ModelSpec m = *ModelPreset("dense2");
  m.heads = 3;
  EXPECT_THROW(ValidateModelSpec(m), Error);
  ModelSpec moe = *ModelPreset("moe");
  moe.experts_per_token = moe.total_experts + 1;
  EXPECT_THROW(ValidateModelSpec(moe), Error);
  EXPECT_FALSE(ModelPreset("gpt5").has_value());
  for (const std::string& name : ModelPresetNames()) {
    ASSERT_TRUE(ModelPreset(name).has_value()) << name;
    EXPECT_NO_THROW(ValidateModelSpec(*ModelPreset(name)));
  }
}

TEST(SynthSpec, FromConfigTable) {
  ConfigTable t = ConfigTable::Parse(
      "[model]\npreset = \"moe\"\nlayers = 3\n[run]\ngen_len = 6\nnthreads = 2\nseed = 9\n"
      "[cost]\nexpert_miss_penalty_ns = 0\n[interference]\ncpu = 5\n"
      "intervals = [\"1:1000:8000\", \"2:0:800\"]\n");
  auto [model, run] = SynthSpecFromTable(t);
  EXPECT_EQ(model.variant, ModelVariant::kMoe);
  EXPECT_EQ(model.layers, 3);
  EXPECT_EQ(run.gen_len, 6);
  EXPECT_EQ(run.nthreads, 2u);
  EXPECT_EQ(run.seed, 9u);
  EXPECT_EQ(run.cost.expert_miss_penalty_ns, 0);
  ASSERT_TRUE(run.interference.has_value());
  EXPECT_EQ(run.interference->cpu, 5u);
  ASSERT_EQ(run.interference->intervals.size(), 2u);
  EXPECT_EQ(run.interference->intervals[0].offset_ns, 1000);
  EXPECT_EQ(run.interference->intervals[1].duration_ns, 800);
  EXPECT_THROW(SynthSpecFromTable(ConfigTable::Parse("[interference]\nintervals = [\"1:2\"]\n")),
               Error);
}

TEST(SynthSpec, IntervalOverrunningTheIterationIsRejected) {
  RunSpec run;
  run.interference = InterferenceSpec{6, {{1, 0, 1'000'000'000}}};
  try {
    GenerateSession(*ModelPreset("dense2"), run);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

}  // namespace
}  // namespace profinfer
