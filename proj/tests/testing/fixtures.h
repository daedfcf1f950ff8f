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


#ifndef PROFINFER_TESTS_TESTING_FIXTURES_H_
#define PROFINFER_TESTS_TESTING_FIXTURES_H_

#include <cstdint>
#include <string>
#include <vector>

#include "profinfer/event_model.h"

namespace profinfer::testing {

// Appends events with consecutive seq values. Op events default to the CPU
// backend and carry whatever optional fields the caller sets.
class EventBuilder {
 public:
  explicit EventBuilder(TraceSession* session, Pid pid = 7) : s_(session), pid_(pid) {}

  RawEvent& Token(ProbeKind kind, int64_t ts, Tid tid, uint32_t batch, uint32_t cpu = 0);
  RawEvent& Graph(ProbeKind kind, int64_t ts, Tid tid, const std::string& guid, uint32_t cpu = 0);
  RawEvent& Op(ProbeKind kind, int64_t ts, Tid tid, Addr addr, OpType type,
               const std::string& name, uint32_t cpu = 0);
  RawEvent& Switch(int64_t ts, Tid prev, Tid next, int64_t prev_state, uint32_t cpu = 0);
  RawEvent& Wakeup(int64_t ts, Tid wakee, uint32_t cpu = 0);

  // Leaves a hole of |n| seq values, as a lost record would.
  void Skip(uint64_t n = 1) { next_seq_ += n; }
  uint64_t next_seq() const { return next_seq_; }

 private:
  RawEvent& Push(RawEvent e);

  TraceSession* s_;
  Pid pid_;
  uint64_t next_seq_ = 0;
};

// Header with str on and the given inference threads.
SessionHeader BasicHeader(std::vector<Tid> tids, bool pmc = false);

// One iteration of a LLaMA-style block head on a single thread, laid out
// as the runtime emits it:
//   0 GET_ROWS, 1 RMS_NORM, 2 MUL (attn_norm-0), 3 MUL_MAT Qcur-0,
//   4 RESHAPE, 5 ROPE, 6 MUL_MAT Kcur-0, 7 RESHAPE, 8 ROPE, 9 MUL_MAT Vcur-0
// The three projections read the output of op 2.
TraceSession LlamaAttentionFixture();
inline constexpr Addr kLlamaAttnNormAddr = 0x5000 + 2 * 0x100;

}  // namespace profinfer::testing

#endif  // PROFINFER_TESTS_TESTING_FIXTURES_H_
