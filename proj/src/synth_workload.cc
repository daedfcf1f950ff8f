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

#include "profinfer/synth_workload.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <tuple>
#include <unordered_map>

#include "profinfer/error.h"

namespace profinfer {

namespace {

constexpr Addr kOpBase = 0x7f0000000000;
constexpr Addr kOpStride = 0x400;
constexpr Addr kConstBase = 0x7e0000000000;
constexpr Addr kConstStride = 0x1000;

// Probability that an expert slot reuses one of the layer's recent experts.
constexpr double kExpertLocality = 0.6;
constexpr size_t kExpertHistory = 3;

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  uint64_t Below(uint64_t n) { return n == 0 ? 0 : gen_() % n; }
  double Unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  uint64_t Raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

Dims D(int64_t a, int64_t b = 1, int64_t c = 1, int64_t d = 1) { return {a, b, c, d}; }

int64_t Elems(const Dims& d) {
  int64_t n = 1;
  for (int64_t e : d) n *= std::max<int64_t>(1, e);
  return n;
}

int64_t PadTo(int64_t v, int64_t step) { return (v + step - 1) / step * step; }

struct OpTemplate {
  std::string name;
  OpType type;
  Backend backend = Backend::kCpu;
  Dims dims{};
  std::vector<Addr> srcs;
  int64_t layer = -1;  // -1 for the output head
  int64_t m = 0, n = 0, k = 0, h = 0;
  bool weight_src = false;  // src0 is a weight tensor
  bool kq = false;          // attention score or context matmul
};

// Emits one iteration's op list. Addresses depend only on the position of
// the op in the template, so they repeat across iterations.
class GraphBuilder {
 public:
  GraphBuilder(const ModelSpec& model, int64_t m, int64_t n_kv, int64_t gpu_layers)
      : model_(model), m_(m), n_kv_(n_kv), gpu_layers_(gpu_layers) {}

  std::vector<OpTemplate> Build() {
    const int64_t hd = model_.hidden_dim, dh = model_.head_dim(), kvd = model_.kv_dim();
    const int64_t nh = model_.heads, nkv = model_.kv_heads, f = model_.ffn_dim;
    const int64_t M = m_;
    Addr inp = Const("inp_embd");
    Addr pos = Const("inp_pos");
    for (int64_t l = 0; l < model_.layers; ++l) {
      layer_ = l;
      backend_ = l >= model_.layers - gpu_layers_ ? Backend::kOpenClGpu : Backend::kCpu;
      auto w = [&](const std::string& s) { return Const(s + "-" + std::to_string(l)); };

      Addr attn_norm = Op("attn_norm", OpKind::kRmsNorm, D(hd, M), {inp, w("attn_norm.weight")});
      Addr q = MatMul("Qcur", w("wq"), attn_norm, hd, M, hd, 1, D(hd, M), true);
      if (model_.qwen_style) q = Op("Qcur_b", OpKind::kAdd, D(hd, M), {q, w("bq")});
      Addr q_rope = Op("Qcur_rope", OpKind::kRope, D(dh, M, nh), {q, pos});
      Addr k = MatMul("Kcur", w("wk"), attn_norm, kvd, M, hd, 1, D(kvd, M), true);
      if (model_.qwen_style) k = Op("Kcur_b", OpKind::kAdd, D(kvd, M), {k, w("bk")});
      Addr k_rope = Op("Kcur_rope", OpKind::kRope, D(dh, M, nkv), {k, pos});
      Addr v = MatMul("Vcur", w("wv"), attn_norm, kvd, M, hd, 1, D(kvd, M), true);
      if (model_.qwen_style) v = Op("Vcur_b", OpKind::kAdd, D(kvd, M), {v, w("bv")});

      Addr kq = MatMul("kq", k_rope, q_rope, n_kv_, M, dh, nh, D(n_kv_, M, nh), false);
      ops_.back().kq = true;
      if (model_.gemma_style) {
        kq = Op("kq_capped", OpKind::kUnary, D(n_kv_, M, nh), {kq});
        kq = Op("kq_scaled", OpKind::kMul, D(n_kv_, M, nh), {kq, w("attn_softcap")});
      }
      Addr sm = Op("kq_soft_max", OpKind::kSoftMax, D(n_kv_, M, nh), {kq});
      if (model_.gemma_style) {
        sm = Op("kq_soft_max_win", OpKind::kSoftMax, D(n_kv_, M, nh), {sm});
        sm = Op("kq_soft_max_norm", OpKind::kSoftMax, D(n_kv_, M, nh), {sm});
      }
      Addr kqv = MatMul("kqv", v, sm, dh, M, n_kv_, nh, D(dh, M, nh), false);
      ops_.back().kq = true;
      Addr attn = MatMul("attn_out", w("wo"), kqv, hd, M, hd, 1, D(hd, M), true);
      if (model_.gemma_style) {
        attn = Op("attn_post_norm", OpKind::kRmsNorm, D(hd, M), {attn, w("attn_post_norm.weight")});
      }
      Addr ffn_inp = Op("ffn_inp", OpKind::kAdd, D(hd, M), {attn, inp});
      Addr ffn_norm = Op("ffn_norm", OpKind::kRmsNorm, D(hd, M), {ffn_inp, w("ffn_norm.weight")});

      if (model_.variant == ModelVariant::kDense) {
        Addr up = MatMul("ffn_up", w("ffn_up"), ffn_norm, f, M, hd, 1, D(f, M), true);
        Addr gate = MatMul("ffn_gate", w("ffn_gate"), ffn_norm, f, M, hd, 1, D(f, M), true);
        if (model_.gemma_style) gate = Op("ffn_gate_soft", OpKind::kSoftMax, D(f, M), {gate});
        Addr silu = Op("ffn_silu", OpKind::kUnary, D(f, M), {gate});
        Addr par = Op("ffn_gate_par", OpKind::kMul, D(f, M), {silu, up});
        Addr out = MatMul("ffn_out", w("ffn_down"), par, hd, M, f, 1, D(hd, M), true);
        inp = Op("l_out", OpKind::kAdd, D(hd, M), {out, ffn_inp});
      } else {
        const int64_t e = model_.total_experts, ek = model_.experts_per_token;
        Addr logits =
            MatMul("ffn_moe_logits", w("ffn_gate_inp"), ffn_norm, e, M, hd, 1, D(e, M), true);
        Addr probs = Op("ffn_moe_probs", OpKind::kSoftMax, D(e, M), {logits});
        Addr topk = Op("ffn_moe_topk", OpKind::kGetRows, D(ek, M), {probs});
        Addr up = MatMulId("ffn_moe_up", w("ffn_up_exps"), ffn_norm, topk, f, M, hd, D(f, ek, M));
        Addr gate =
            MatMulId("ffn_moe_gate", w("ffn_gate_exps"), ffn_norm, topk, f, M, hd, D(f, ek, M));
        Addr silu = Op("ffn_moe_silu", OpKind::kUnary, D(f, ek, M), {gate});
        Addr par = Op("ffn_moe_gate_par", OpKind::kMul, D(f, ek, M), {silu, up});
        Addr down =
            MatMulId("ffn_moe_down", w("ffn_down_exps"), par, topk, hd, M, f, D(hd, ek, M));
        Addr weights = Op("ffn_moe_weights", OpKind::kGetRows, D(1, ek, M), {probs, topk});
        Addr weighted = Op("ffn_moe_weighted", OpKind::kMul, D(hd, ek, M), {down, weights});
        inp = Op("l_out", OpKind::kAdd, D(hd, M), {weighted, ffn_inp});
      }
    }
    layer_ = -1;
    backend_ = gpu_layers_ > 0 ? Backend::kOpenClGpu : Backend::kCpu;
    Addr norm = Op("result_norm", OpKind::kRmsNorm, D(hd, M), {inp, Const("output_norm.weight")});
    MatMul("result_output", Const("output.weight"), norm, model_.vocab, M, hd, 1,
           D(model_.vocab, M), true);
    return std::move(ops_);
  }

 private:
  Addr Const(const std::string& key) {
    auto [it, inserted] = consts_.emplace(key, kConstBase + consts_.size() * kConstStride);
    return it->second;
  }

  Addr Op(const std::string& base, OpType type, Dims dims, std::vector<Addr> srcs) {
    OpTemplate t;
    t.name = layer_ >= 0 ? base + "-" + std::to_string(layer_) : base;
    t.type = type;
    t.backend = backend_;
    t.dims = dims;
    t.srcs = std::move(srcs);
    t.layer = layer_;
    ops_.push_back(std::move(t));
    return kOpBase + (ops_.size() - 1) * kOpStride;
  }

  Addr MatMul(const std::string& base, Addr src0, Addr src1, int64_t n, int64_t m, int64_t k,
              int64_t h, Dims dims, bool weight_src) {
    Addr a = Op(base, OpKind::kMulMat, dims, {src0, src1});
    OpTemplate& t = ops_.back();
    std::tie(t.m, t.n, t.k, t.h) = std::make_tuple(m, n, k, h);
    t.weight_src = weight_src;
    return a;
  }

  Addr MatMulId(const std::string& base, Addr src0, Addr src1, Addr ids, int64_t n, int64_t m,
                int64_t k, Dims dims) {
    Addr a = Op(base, OpKind::kMulMatId, dims, {src0, src1, ids});
    OpTemplate& t = ops_.back();
    std::tie(t.m, t.n, t.k, t.h) = std::make_tuple(m, n, k, int64_t{model_.experts_per_token});
    t.weight_src = true;
    return a;
  }

  const ModelSpec& model_;
  int64_t m_, n_kv_, gpu_layers_;
  int64_t layer_ = -1;
  Backend backend_ = Backend::kCpu;
  std::vector<OpTemplate> ops_;
  std::map<std::string, Addr> consts_;
};

// Per-layer expert draws with locality, plus the reuse distances of the
// decode rows (cold experts count i + 1).
class ExpertPicker {
 public:
  ExpertPicker(const ModelSpec& model, uint64_t seed) : model_(model), rng_(seed) {}

  struct Pick {
    std::vector<uint32_t> ids;
    double avg_distance = 0;
    int64_t first_seen = 0;  // ids never drawn before in this layer
  };

  Pick Next(int64_t layer, bool decode) {
    LayerState& s = layers_[layer];
    std::vector<uint32_t> recent;
    for (const auto& row : s.history) recent.insert(recent.end(), row.begin(), row.end());
    std::set<uint32_t> chosen;
    while (chosen.size() < model_.experts_per_token) {
      uint32_t e;
      if (!recent.empty() && rng_.Unit() < kExpertLocality) {
        e = recent[rng_.Below(recent.size())];
      } else {
        e = static_cast<uint32_t>(rng_.Below(model_.total_experts));
      }
      chosen.insert(e);
    }
    Pick p;
    p.ids.assign(chosen.begin(), chosen.end());
    for (uint32_t e : p.ids) {
      if (s.ever.insert(e).second) ++p.first_seen;
    }
    if (decode) {
      double sum = 0;
      for (uint32_t e : p.ids) {
        auto it = s.last_decode.find(e);
        sum += it == s.last_decode.end() ? static_cast<double>(s.decode_rows + 1)
                                         : static_cast<double>(s.decode_rows - it->second);
      }
      p.avg_distance = sum / static_cast<double>(p.ids.size());
      for (uint32_t e : p.ids) s.last_decode[e] = s.decode_rows;
      ++s.decode_rows;
    }
    s.history.push_back(p.ids);
    if (s.history.size() > kExpertHistory) s.history.erase(s.history.begin());
    return p;
  }

 private:
  struct LayerState {
    std::vector<std::vector<uint32_t>> history;
    std::set<uint32_t> ever;
    std::unordered_map<uint32_t, int64_t> last_decode;
    int64_t decode_rows = 0;
  };
  const ModelSpec& model_;
  Rng rng_;
  std::map<int64_t, LayerState> layers_;
};

// Tie-break for events sharing a timestamp: closes before opens, so the
// emission order never shows a thread inside two spans at once.
int Priority(ProbeKind k) {
  switch (k) {
    case ProbeKind::kOpExit: return 0;
    case ProbeKind::kGraphExit: return 1;
    case ProbeKind::kTokenExit: return 2;
    case ProbeKind::kSchedSwitch: return 3;
    case ProbeKind::kSchedWakeup: return 4;
    case ProbeKind::kTokenEnter: return 5;
    case ProbeKind::kGraphEnter: return 6;
    case ProbeKind::kOpEnter: return 7;
  }
  return 8;
}

int64_t Split(int64_t total, uint32_t parts, uint32_t idx) {
  return total / parts + (idx < static_cast<uint32_t>(total % parts) ? 1 : 0);
}

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, what);
}

}  // namespace

void ValidateModelSpec(const ModelSpec& m) {
  Require(m.layers >= 1, "model.layers must be >= 1");
  Require(m.hidden_dim >= 1 && m.heads >= 1 && m.hidden_dim % m.heads == 0,
          "model.hidden_dim must be a positive multiple of model.heads");
  Require(m.kv_heads >= 1 && m.heads % m.kv_heads == 0,
          "model.heads must be a positive multiple of model.kv_heads");
  Require(m.ffn_dim >= 1, "model.ffn_dim must be >= 1");
  Require(m.vocab >= 1, "model.vocab must be >= 1");
  if (m.variant == ModelVariant::kMoe) {
    Require(m.total_experts >= 1, "model.total_experts must be >= 1 for moe");
    Require(m.experts_per_token >= 1 && m.experts_per_token <= m.total_experts &&
                m.experts_per_token <= kMaxExperts,
            "model.experts_per_token must be in [1, min(total_experts, " +
                std::to_string(kMaxExperts) + ")]");
  } else {
    Require(m.total_experts == 0 && m.experts_per_token == 0,
            "dense models take no expert counts");
  }
}

void ValidateRunSpec(const RunSpec& r, const ModelSpec& model) {
  const CostModel& c = r.cost;
  Require(r.prompt_len >= 1, "run.prompt_len must be >= 1");
  Require(r.gen_len >= 0, "run.gen_len must be >= 0");
  Require(r.nthreads >= 1 && r.nthreads <= 8, "run.nthreads must be in [1, 8]");
  Require(r.kv_step >= 1, "run.kv_step must be >= 1");
  Require(r.gpu_layers >= 0 && r.gpu_layers <= model.layers,
          "run.gpu_layers must be in [0, model.layers]");
  Require(r.drop_rate >= 0.0 && r.drop_rate < 1.0, "run.drop_rate must be in [0, 1)");
  Require(c.ns_per_unit_complexity >= 0 && c.elementwise_ns_per_elem >= 0 && c.gpu_speedup > 0,
          "cost rates must be non-negative and gpu_speedup positive");
  Require(c.per_op_overhead_ns >= 1, "cost.per_op_overhead_ns must be >= 1");
  Require(c.matmul_ns_per_hidden >= 0, "cost.matmul_ns_per_hidden must be non-negative");
  Require(c.kq_growth_ns_per_token >= 0 && c.expert_miss_penalty_ns >= 0,
          "cost growth and penalty must be non-negative");
  Require(c.inter_op_gap_ns >= 0 && c.graph_gap_ns >= 0 && c.token_pre_ns >= 0 &&
              c.token_post_ns >= 0 && c.max_jitter_ns >= 0,
          "cost gaps and jitter must be non-negative");
  Require(c.refills_per_op >= 0 && c.writes_per_op >= 0 && c.cycles_per_ns >= 1,
          "cost PMC constants must be non-negative, cycles_per_ns >= 1");
  bool sched = r.sched_events || r.interference.has_value();
  Require(c.token_gap_ns >= (sched ? 4000 : 0),
          sched ? "cost.token_gap_ns must be >= 4000 with sched events"
                : "cost.token_gap_ns must be >= 0");
  if (r.interference) {
    Require(r.nthreads >= 2, "interference needs at least two threads");
    bool found = false;
    for (uint32_t i = 0; i < r.nthreads; ++i) found |= (4 + i) % 8 == r.interference->cpu;
    Require(found, "interference.cpu " + std::to_string(r.interference->cpu) +
                       " hosts no inference thread");
    for (const BusyInterval& b : r.interference->intervals) {
      Require(b.iteration >= 0 && b.iteration <= r.gen_len,
              "interference interval iteration out of range");
      Require(b.offset_ns >= 0 && b.duration_ns >= 8,
              "interference intervals need offset >= 0 and duration >= 8");
    }
  }
}

std::vector<std::string> ModelPresetNames() { return {"dense2", "gemma", "llama", "moe", "qwen"}; }

std::optional<ModelSpec> ModelPreset(std::string_view name) {
  ModelSpec m;
  m.name = std::string(name);
  if (name == "dense2") return m;
  if (name == "llama" || name == "qwen" || name == "gemma") {
    m.layers = 4;
    m.hidden_dim = 512;
    m.heads = 8;
    m.kv_heads = 2;
    m.ffn_dim = 1024;
    m.vocab = 4096;
    m.qwen_style = name == "qwen";
    m.gemma_style = name == "gemma";
    return m;
  }
  if (name == "moe") {
    m.ffn_dim = 128;
    m.variant = ModelVariant::kMoe;
    m.total_experts = 60;
    m.experts_per_token = 4;
    return m;
  }
  return std::nullopt;
}

std::pair<ModelSpec, RunSpec> SynthSpecFromTable(const ConfigTable& t) {
  std::string preset = t.GetString("model.preset", "dense2");
  std::optional<ModelSpec> base = ModelPreset(preset);
  if (!base) throw Error(ErrorCode::kConfig, "unknown model.preset '" + preset + "'");
  ModelSpec m = *base;
  m.layers = t.GetInt("model.layers", m.layers);
  m.hidden_dim = t.GetInt("model.hidden_dim", m.hidden_dim);
  m.heads = t.GetInt("model.heads", m.heads);
  m.kv_heads = t.GetInt("model.kv_heads", m.kv_heads);
  m.ffn_dim = t.GetInt("model.ffn_dim", m.ffn_dim);
  m.vocab = t.GetInt("model.vocab", m.vocab);
  std::string variant =
      t.GetString("model.variant", m.variant == ModelVariant::kMoe ? "moe" : "dense");
  if (variant == "moe") {
    m.variant = ModelVariant::kMoe;
  } else if (variant == "dense") {
    m.variant = ModelVariant::kDense;
  } else {
    throw Error(ErrorCode::kConfig, "model.variant must be dense or moe, got '" + variant + "'");
  }
  m.total_experts = static_cast<uint32_t>(t.GetInt("model.total_experts", m.total_experts));
  m.experts_per_token =
      static_cast<uint32_t>(t.GetInt("model.experts_per_token", m.experts_per_token));
  m.gemma_style = t.GetBool("model.gemma_style", m.gemma_style);
  m.qwen_style = t.GetBool("model.qwen_style", m.qwen_style);

  RunSpec r;
  r.prompt_len = t.GetInt("run.prompt_len", r.prompt_len);
  r.gen_len = t.GetInt("run.gen_len", r.gen_len);
  r.nthreads = static_cast<uint32_t>(t.GetInt("run.nthreads", r.nthreads));
  r.flags.str = t.GetBool("run.str", r.flags.str);
  r.flags.pmc = t.GetBool("run.pmc", r.flags.pmc);
  r.flags.perf_buffer = t.GetBool("run.perf_buffer", r.flags.perf_buffer);
  r.kv_step = t.GetInt("run.kv_step", r.kv_step);
  r.gpu_layers = t.GetInt("run.gpu_layers", r.gpu_layers);
  r.drop_rate = t.GetDouble("run.drop_rate", r.drop_rate);
  r.sched_events = t.GetBool("run.sched_events", r.sched_events);
  r.seed = static_cast<uint64_t>(t.GetInt("run.seed", static_cast<int64_t>(r.seed)));

  CostModel& c = r.cost;
  c.ns_per_unit_complexity = t.GetDouble("cost.ns_per_unit_complexity", c.ns_per_unit_complexity);
  c.per_op_overhead_ns = t.GetInt("cost.per_op_overhead_ns", c.per_op_overhead_ns);
  c.matmul_ns_per_hidden = t.GetInt("cost.matmul_ns_per_hidden", c.matmul_ns_per_hidden);
  c.elementwise_ns_per_elem = t.GetDouble("cost.elementwise_ns_per_elem", c.elementwise_ns_per_elem);
  c.gpu_speedup = t.GetDouble("cost.gpu_speedup", c.gpu_speedup);
  c.kq_growth_ns_per_token = t.GetInt("cost.kq_growth_ns_per_token", c.kq_growth_ns_per_token);
  c.expert_miss_penalty_ns = t.GetInt("cost.expert_miss_penalty_ns", c.expert_miss_penalty_ns);
  c.inter_op_gap_ns = t.GetInt("cost.inter_op_gap_ns", c.inter_op_gap_ns);
  c.graph_gap_ns = t.GetInt("cost.graph_gap_ns", c.graph_gap_ns);
  c.token_pre_ns = t.GetInt("cost.token_pre_ns", c.token_pre_ns);
  c.token_post_ns = t.GetInt("cost.token_post_ns", c.token_post_ns);
  c.token_gap_ns = t.GetInt("cost.token_gap_ns", c.token_gap_ns);
  c.max_jitter_ns = t.GetInt("cost.max_jitter_ns", c.max_jitter_ns);
  c.refills_per_op = t.GetInt("cost.refills_per_op", c.refills_per_op);
  c.writes_per_op = t.GetInt("cost.writes_per_op", c.writes_per_op);
  c.cycles_per_ns = t.GetInt("cost.cycles_per_ns", c.cycles_per_ns);

  if (t.Has("interference.cpu") || t.Has("interference.intervals")) {
    InterferenceSpec in;
    in.cpu = static_cast<uint32_t>(t.GetInt("interference.cpu", in.cpu));
    // "iteration:offset_ns:duration_ns"
    for (const std::string& item : t.GetStringList("interference.intervals")) {
      BusyInterval b;
      char* end = nullptr;
      const char* p = item.c_str();
      b.iteration = std::strtoll(p, &end, 10);
      bool ok = *end == ':';
      if (ok) b.offset_ns = std::strtoll(end + 1, &end, 10);
      ok = ok && *end == ':';
      if (ok) b.duration_ns = std::strtoll(end + 1, &end, 10);
      ok = ok && *end == '\0';
      if (!ok) {
        throw Error(ErrorCode::kConfig, "interference interval '" + item +
                                            "' is not iteration:offset_ns:duration_ns");
      }
      in.intervals.push_back(b);
    }
    r.interference = std::move(in);
  }
  ValidateModelSpec(m);
  ValidateRunSpec(r, m);
  return {m, r};
}

int64_t IterationOverheadNs(const CostModel& cost, size_t n_ops, size_t n_partitions) {
  return cost.token_pre_ns + cost.token_post_ns +
         static_cast<int64_t>(n_ops) * cost.inter_op_gap_ns +
         2 * static_cast<int64_t>(n_partitions) * cost.graph_gap_ns;
}

SynthOutput GenerateSession(const ModelSpec& model, const RunSpec& run) {
  ValidateModelSpec(model);
  ValidateRunSpec(run, model);
  const CostModel& cost = run.cost;
  const uint32_t nthreads = run.nthreads;
  const bool sched = run.sched_events || run.interference.has_value();

  Rng jitter_rng(run.seed * 0x9e3779b97f4a7c15ULL + 1);
  Rng drop_rng(run.seed * 0x9e3779b97f4a7c15ULL + 2);
  Rng pmc_rng(run.seed * 0x9e3779b97f4a7c15ULL + 3);
  ExpertPicker experts(model, run.seed * 0x9e3779b97f4a7c15ULL + 4);

  SynthOutput out;
  SessionHeader& header = out.session.header;
  header.flags = run.flags;
  if (run.flags.pmc) header.pmc_specs = CanonicalPmcSpecs();
  header.nthreads = nthreads;
  header.experts_per_token = model.variant == ModelVariant::kMoe ? model.experts_per_token : 0;
  header.backend_names[kSynthCpuGuid] = "CPU";
  if (run.gpu_layers > 0) header.backend_names[kSynthGpuGuid] = "OpenCL";

  std::vector<Tid> tids;
  std::vector<uint32_t> cpus;
  for (uint32_t i = 0; i < nthreads; ++i) {
    tids.push_back(kSynthMainTid + static_cast<Tid>(i));
    cpus.push_back((4 + i) % 8);
    header.inference_tids.insert(tids.back());
  }
  const size_t npmc = header.pmc_specs.size();
  std::vector<std::vector<uint64_t>> counters(nthreads, std::vector<uint64_t>(npmc));
  for (auto& c : counters) {
    for (auto& v : c) v = 1000000 + pmc_rng.Below(1000000);
  }

  std::vector<RawEvent> events;
  auto push = [&](ProbeKind kind, int64_t ts, Pid pid, Tid tid, uint32_t cpu, Payload payload) {
    RawEvent e;
    e.kind = kind;
    e.ts_ns = ts;
    e.pid = pid;
    e.tid = tid;
    e.cpu = cpu;
    e.payload = std::move(payload);
    events.push_back(std::move(e));
  };

  GroundTruth& truth = out.truth;
  int64_t t = 1000000000;  // first token starts at 1 s
  const int64_t n_iters = 1 + run.gen_len;
  for (int64_t iter = 0; iter < n_iters; ++iter) {
    const bool prefill = iter == 0;
    const int64_t M = prefill ? run.prompt_len : 1;
    const int64_t n_kv = PadTo(run.prompt_len + iter, run.kv_step);
    std::vector<OpTemplate> ops = GraphBuilder(model, M, n_kv, run.gpu_layers).Build();

    TruthIteration ti;
    ti.iteration = iter;
    ti.phase = prefill ? Phase::kPrefill : Phase::kDecode;
    ti.batch_size = static_cast<uint32_t>(M);

    // Expert draws happen once per layer; the three gated ops share them.
    std::map<int64_t, ExpertPicker::Pick> picks;
    if (model.variant == ModelVariant::kMoe) {
      for (int64_t l = 0; l < model.layers; ++l) picks[l] = experts.Next(l, !prefill);
    }

    const int64_t token_enter = t;
    push(ProbeKind::kTokenEnter, token_enter, kSynthPid, kSynthMainTid, cpus[0],
         TokenPayload{static_cast<uint32_t>(M)});
    t += cost.token_pre_ns;

    size_t n_partitions = 0;
    size_t idx = 0;
    while (idx < ops.size()) {
      const Backend part = ops[idx].backend;
      const std::string guid = part == Backend::kCpu ? kSynthCpuGuid : kSynthGpuGuid;
      ++n_partitions;
      push(ProbeKind::kGraphEnter, t, kSynthPid, kSynthMainTid, cpus[0], GraphPayload{guid});
      t += cost.graph_gap_ns;
      for (; idx < ops.size() && ops[idx].backend == part; ++idx) {
        const OpTemplate& op = ops[idx];
        const Addr addr = kOpBase + idx * kOpStride;
        TruthOp to;
        to.addr = addr;
        to.name = op.name;
        to.type = op.type;
        to.backend = op.backend;
        to.dims = op.dims;
        to.srcs = op.srcs;
        to.start_ns = t;

        const int64_t out_elems = Elems(op.dims);
        int64_t e = cost.per_op_overhead_ns;
        int64_t bytes = out_elems * 4;
        int64_t faults = 0;
        const bool gpu = op.backend != Backend::kCpu;
        if (op.type == OpKind::kMulMat || op.type == OpKind::kMulMatId) {
          std::tie(to.m, to.n, to.k, to.h) = std::make_tuple(op.m, op.n, op.k, op.h);
          to.complexity = op.m * op.n * op.k * op.h;
          double rate = cost.ns_per_unit_complexity / (gpu ? cost.gpu_speedup : 1.0);
          e += std::llround(rate * static_cast<double>(to.complexity)) +
               cost.matmul_ns_per_hidden * model.hidden_dim;
          bytes = op.n * op.k * op.h * (op.weight_src ? 1 : 2);
          if (op.kq) e += cost.kq_growth_ns_per_token * n_kv;
          if (op.type == OpKind::kMulMatId) {
            const ExpertPicker::Pick& p = picks.at(op.layer);
            to.expert_ids = p.ids;
            to.expert_avg_distance = p.avg_distance;
            e += std::llround(static_cast<double>(cost.expert_miss_penalty_ns) * p.avg_distance);
            faults = p.first_seen;
            truth.expert_schedule[op.name].push_back(p.ids);
          }
        } else {
          e += std::llround(cost.elementwise_ns_per_elem * static_cast<double>(out_elems));
        }
        to.elapsed_ns = e;
        const int64_t op_start = t, op_end = t + e;

        const uint32_t runners = gpu ? 1 : nthreads;
        const int64_t jmax = runners > 1 ? std::min(cost.max_jitter_ns, (e - 1) / 2) : 0;
        const bool with_pmc = run.flags.pmc && !gpu;
        std::vector<int64_t> totals(npmc, 0);
        const int64_t refills = bytes / 64 + cost.refills_per_op;
        const int64_t writes = out_elems * 4 / 16 + cost.writes_per_op;
        for (uint32_t r = 0; r < runners; ++r) {
          int64_t s = op_start, x = op_end;
          if (jmax > 0) {
            if (r != idx % runners) s += static_cast<int64_t>(jitter_rng.Below(jmax + 1));
            if (r != (idx + 1) % runners) x -= static_cast<int64_t>(jitter_rng.Below(jmax + 1));
          }
          OpPayload pl;
          pl.op_addr = addr;
          pl.op_type = op.type;
          pl.op_name = op.name;
          pl.backend = op.backend;
          if (run.flags.str) {
            pl.dims = op.dims;
            pl.src_addrs = op.srcs;
          }
          pl.expert_ids = to.expert_ids;
          OpPayload exit_pl = pl;
          if (with_pmc) {
            const int64_t cycles = cost.cycles_per_ns * (x - s);
            const int64_t idle = cycles - cycles * 6 / (10 * static_cast<int64_t>(runners));
            std::vector<uint64_t>& c = counters[r];
            pl.pmc = c;
            for (size_t i = 0; i < npmc; ++i) {
              const std::string& name = header.pmc_specs[i].name;
              int64_t d = 0;
              if (name == kPmcL3dCacheRefill) d = Split(refills, runners, r);
              else if (name == kPmcMemAccessWr) d = Split(writes, runners, r);
              else if (name == kPmcMajorFaults) d = Split(faults, runners, r);
              else if (name == kPmcCycles) d = cycles;
              else if (name == kPmcIdleBackendCycles) d = idle;
              c[i] += static_cast<uint64_t>(d);
              totals[i] += d;
            }
            exit_pl.pmc = c;
          }
          push(ProbeKind::kOpEnter, s, kSynthPid, tids[r], cpus[r], std::move(pl));
          push(ProbeKind::kOpExit, x, kSynthPid, tids[r], cpus[r], std::move(exit_pl));
        }
        if (with_pmc) to.pmc_totals = totals;
        ti.op_sum_ns += e;
        ti.ops.push_back(std::move(to));
        t = op_end + cost.inter_op_gap_ns;
      }
      push(ProbeKind::kGraphExit, t, kSynthPid, kSynthMainTid, cpus[0], GraphPayload{guid});
      t += cost.graph_gap_ns;
    }
    t += cost.token_post_ns;
    const int64_t token_exit = t;
    push(ProbeKind::kTokenExit, token_exit, kSynthPid, kSynthMainTid, cpus[0],
         TokenPayload{static_cast<uint32_t>(M)});
    ti.duration_ns = token_exit - token_enter;
    ti.overhead_ns = ti.duration_ns - ti.op_sum_ns;

    if (sched) {
      for (uint32_t r = 0; r < nthreads; ++r) {
        push(ProbeKind::kSchedWakeup, token_enter - 2000, 0, 0, cpus[r],
             SchedPayload::Wakeup(tids[r]));
        push(ProbeKind::kSchedSwitch, token_enter - 1000, 0, 0, cpus[r],
             SchedPayload::Switch(0, tids[r], 0));
        push(ProbeKind::kSchedSwitch, token_exit + 1000, kSynthPid, tids[r], cpus[r],
             SchedPayload::Switch(tids[r], 0, 1));
      }
    }
    if (run.interference) {
      const InterferenceSpec& in = *run.interference;
      uint32_t vi = 0;
      while (cpus[vi] != in.cpu) ++vi;
      const uint32_t pi = (vi + 1) % nthreads;
      const Tid victim = tids[vi], partner = tids[pi];
      for (const BusyInterval& b : in.intervals) {
        if (b.iteration != iter) continue;
        if (b.offset_ns + b.duration_ns > ti.duration_ns) {
          throw Error(ErrorCode::kConfig,
                      "interference interval at offset " + std::to_string(b.offset_ns) +
                          " ns overruns iteration " + std::to_string(iter) + " (" +
                          std::to_string(ti.duration_ns) + " ns)");
        }
        const int64_t s = token_enter + b.offset_ns, d = b.duration_ns;
        // Preempted by the foreign task, woken on the partner's cpu, time
        // sliced there, then back home once the foreign task leaves.
        push(ProbeKind::kSchedSwitch, s, kSynthPid, victim, in.cpu,
             SchedPayload::Switch(victim, kSynthForeignTid, 0));
        push(ProbeKind::kSchedWakeup, s + d / 8, 0, 0, cpus[pi], SchedPayload::Wakeup(victim));
        push(ProbeKind::kSchedSwitch, s + d / 4, kSynthPid, partner, cpus[pi],
             SchedPayload::Switch(partner, victim, 1));
        push(ProbeKind::kSchedSwitch, s + d / 2, kSynthPid, victim, cpus[pi],
             SchedPayload::Switch(victim, partner, 1));
        push(ProbeKind::kSchedSwitch, s + 3 * d / 4, kSynthPid, partner, cpus[pi],
             SchedPayload::Switch(partner, victim, 1));
        push(ProbeKind::kSchedSwitch, s + 7 * d / 8, kSynthPid, victim, cpus[pi],
             SchedPayload::Switch(victim, partner, 1));
        push(ProbeKind::kSchedSwitch, s + d, kSynthForeignPid, kSynthForeignTid, in.cpu,
             SchedPayload::Switch(kSynthForeignTid, victim, 1));
      }
    }

    // Oracle DAG as seen from the main thread, which runs every op.
    ProfDag& dag = ti.dag;
    dag.iteration = iter;
    dag.reference_tid = kSynthMainTid;
    dag.pmc_specs = header.pmc_specs;
    std::map<std::pair<Addr, Addr>, uint32_t> edges;
    for (size_t i = 0; i < ti.ops.size(); ++i) {
      const TruthOp& op = ti.ops[i];
      OpNode n;
      n.addr = op.addr;
      n.op_type = op.type;
      n.op_name = op.name;
      n.backend = op.backend;
      if (run.flags.str) n.dims = op.dims;
      n.order = static_cast<int64_t>(i);
      n.elapsed_ns = op.elapsed_ns;
      n.pmc_totals = op.pmc_totals;
      dag.nodes.emplace(op.addr, std::move(n));
      for (Addr src : op.srcs) ++edges[{src, op.addr}];
    }
    for (const TruthOp& op : ti.ops) {
      for (Addr src : op.srcs) {
        if (dag.nodes.count(src)) continue;
        OpNode c;
        c.addr = src;
        c.op_type = OpKind::kNone;
        c.is_constant = true;
        dag.nodes.emplace(src, std::move(c));
      }
    }
    for (const auto& [key, mult] : edges) dag.edges.push_back({key.first, key.second, mult});

    if (prefill) {
      truth.ttft_ns = ti.duration_ns;
    } else {
      truth.tpot_ns.push_back(ti.duration_ns);
    }
    truth.iterations.push_back(std::move(ti));
    t += cost.token_gap_ns;
  }

  std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
    return std::make_tuple(a.ts_ns, Priority(a.kind), a.tid) <
           std::make_tuple(b.ts_ns, Priority(b.kind), b.tid);
  });
  std::vector<RawEvent>& kept = out.session.events;
  kept.reserve(events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    events[i].seq = i;
    if (run.drop_rate > 0 && IsOpKind(events[i].kind) && drop_rng.Unit() < run.drop_rate) {
      truth.dropped_seqs.push_back(i);
      continue;
    }
    kept.push_back(std::move(events[i]));
  }
  if (run.flags.perf_buffer) header.lost_events = truth.dropped_seqs.size();
  header.experts_per_token = model.variant == ModelVariant::kMoe ? model.experts_per_token : 0;
  return out;
}

}  // namespace profinfer
