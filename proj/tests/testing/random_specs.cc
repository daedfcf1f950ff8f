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


#include "testing/random_specs.h"

#include <algorithm>
#include <sstream>

namespace profinfer::testing {

namespace {

int64_t Pick(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

bool Coin(std::mt19937_64& rng, int percent) { return static_cast<int>(rng() % 100) < percent; }

}  // namespace

RandomSpec DrawSpec(std::mt19937_64& rng) {
  RandomSpec s;
  ModelSpec& m = s.model;
  m.name = "random";
  m.layers = Pick(rng, 1, 3);
  const int64_t head_dim = 16 * Pick(rng, 1, 2);
  m.heads = int64_t{1} << Pick(rng, 1, 3);
  m.kv_heads = m.heads >> Pick(rng, 0, 1);
  m.hidden_dim = m.heads * head_dim;
  m.ffn_dim = 16 * Pick(rng, 2, 12);
  if (Coin(rng, 30)) {
    m.variant = ModelVariant::kMoe;
    m.total_experts = static_cast<uint32_t>(Pick(rng, 4, 16));
    m.experts_per_token = static_cast<uint32_t>(Pick(rng, 1, std::min<int64_t>(4, m.total_experts)));
  }
  m.qwen_style = Coin(rng, 25);
  m.gemma_style = Coin(rng, 25);
  m.vocab = 16 * Pick(rng, 8, 64);

  RunSpec& r = s.run;
  r.prompt_len = Pick(rng, 1, 12);
  r.gen_len = Pick(rng, 1, 4);
  r.nthreads = static_cast<uint32_t>(Pick(rng, 1, 4));
  r.flags.str = true;
  r.flags.pmc = Coin(rng, 70);
  r.flags.perf_buffer = Coin(rng, 50);
  r.kv_step = 16 * Pick(rng, 1, 2);
  r.gpu_layers = Coin(rng, 20) ? Pick(rng, 1, m.layers) : 0;
  r.sched_events = Coin(rng, 30);
  r.cost.max_jitter_ns = Pick(rng, 0, 400);
  r.cost.inter_op_gap_ns = Pick(rng, 0, 800);
  r.seed = rng();
  return s;
}

std::string RandomSpec::Describe() const {
  std::ostringstream os;
  os << "layers=" << model.layers << " hidden=" << model.hidden_dim << " heads=" << model.heads
     << "/" << model.kv_heads << " ffn=" << model.ffn_dim << " vocab=" << model.vocab
     << (model.variant == ModelVariant::kMoe ? " moe(" + std::to_string(model.total_experts) +
                                                   "," + std::to_string(model.experts_per_token) +
                                                   ")"
                                             : " dense")
     << (model.qwen_style ? " qwen" : "") << (model.gemma_style ? " gemma" : "")
     << " prompt=" << run.prompt_len << " gen=" << run.gen_len << " threads=" << run.nthreads
     << " pmc=" << run.flags.pmc << " gpu_layers=" << run.gpu_layers << " seed=" << run.seed;
  return os.str();
}

}  // namespace profinfer::testing
