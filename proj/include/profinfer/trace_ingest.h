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

#ifndef PROFINFER_TRACE_INGEST_H_
#define PROFINFER_TRACE_INGEST_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "profinfer/event_model.h"

namespace profinfer {

// Iteration of events that fall outside every token span.
inline constexpr int64_t kOutside = -1;

enum class Phase : uint8_t { kPrefill, kDecode };
const char* PhaseName(Phase phase);

struct IterationIndex {
  int64_t iteration = 0;
  Phase phase = Phase::kDecode;
  uint32_t batch_size = 1;
  RawEvent token_enter;
  RawEvent token_exit;

  int64_t duration_ns() const { return token_exit.ts_ns - token_enter.ts_ns; }
};

struct OpSpan {
  Addr op_addr = 0;
  OpType op_type;
  std::string op_name;
  Backend backend = Backend::kCpu;
  Tid tid = 0;
  RawEvent enter;
  RawEvent exit;
  int64_t iteration = kOutside;
  std::optional<std::vector<int64_t>> pmc_delta;

  int64_t elapsed_ns() const { return exit.ts_ns - enter.ts_ns; }
  const OpPayload& payload() const { return *enter.op(); }
};

struct GraphSpan {
  std::string backend_guid;
  Tid tid = 0;
  RawEvent enter;
  RawEvent exit;
  int64_t iteration = kOutside;
};

struct ThreadGroups {
  // Inference threads; each list is sorted by (ts_ns, seq).
  std::map<Tid, std::vector<RawEvent>> inference;
  // Everything else (sched events emitted on foreign threads).
  std::map<Tid, std::vector<RawEvent>> other;
};

ThreadGroups GroupAndSort(const TraceSession& session);

// seq -> iteration for every Op and Graph event of the session.
using IterationAnnotations = std::unordered_map<uint64_t, int64_t>;

struct IterationResult {
  std::vector<IterationIndex> iterations;
  IterationAnnotations annotations;
};

// Token spans define iterations. Throws ErrorCode::kUnbalancedProbe naming
// the seq of a TokenExit with no open TokenEnter, or of a TokenEnter that
// opens while another is open. A trailing unclosed TokenEnter is ignored.
IterationResult AssignIterations(const TraceSession& session);

struct PairResult {
  std::vector<OpSpan> spans;
  std::vector<RawEvent> orphans;  // op events only, sorted by seq
  std::vector<GraphSpan> graph_spans;
  std::vector<RawEvent> graph_orphans;
};

// Pairs enter/exit per thread. A mismatch is tolerated (both sides become
// orphans) only when a record may have been lost in between: either the seq
// values around it have a gap, or the session used the ring transport, which
// drops silently. Otherwise it throws ErrorCode::kStructural.
PairResult PairSpans(const TraceSession& session, const ThreadGroups& groups,
                     const IterationAnnotations& annotations);

struct IngestResult {
  ThreadGroups groups;
  std::vector<IterationIndex> iterations;
  IterationAnnotations annotations;
  std::vector<OpSpan> spans;
  std::vector<RawEvent> orphans;
  std::vector<GraphSpan> graph_spans;
  std::vector<RawEvent> graph_orphans;

  const IterationIndex* FindIteration(int64_t iteration) const;
  int64_t IterationOf(uint64_t seq) const;
};

IngestResult Ingest(const TraceSession& session);

// max(exit) - min(enter) over the spans of one op. Throws kDomain if empty.
int64_t OpElapsed(const std::vector<const OpSpan*>& spans);

// One operator of one iteration, merged across the threads that ran it.
struct OpAggregate {
  Addr op_addr = 0;
  OpType op_type;
  std::string op_name;
  Backend backend = Backend::kCpu;
  std::optional<Dims> dims;
  std::optional<std::vector<Addr>> src_addrs;
  std::vector<const OpSpan*> spans;  // sorted by (enter ts, seq)
  int64_t first_enter_ns = 0;
  int64_t elapsed_ns = 0;
  // Sum of per-thread deltas; absent when no span carried readings.
  std::optional<std::vector<int64_t>> pmc_totals;
};

// Ops of |iteration| in order of first entry. Pointers refer into |ingest|.
std::vector<OpAggregate> AggregateOps(const IngestResult& ingest, int64_t iteration);

}  // namespace profinfer

#endif  // PROFINFER_TRACE_INGEST_H_
