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

#ifndef PROFINFER_PROFTIME_H_
#define PROFINFER_PROFTIME_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "profinfer/event_model.h"
#include "profinfer/trace_ingest.h"

namespace profinfer {

// How a switch-out's prev_state maps to a thread state. kPaper: 0 -> Idle,
// 1 -> Runnable. kKernel: 0 (TASK_RUNNING, preempted) -> Runnable, anything
// else (sleeping) -> Idle.
enum class SchedSemantics : uint8_t { kPaper, kKernel };
std::optional<SchedSemantics> ParseSchedSemantics(std::string_view name);
const char* SchedSemanticsName(SchedSemantics s);

inline constexpr std::string_view kCategoryToken = "token";
inline constexpr std::string_view kCategoryGraph = "graph";
inline constexpr std::string_view kCategoryOp = "op";
inline constexpr std::string_view kCategoryState = "state";

// Thread-state tracks live under this pid in the exported trace.
inline constexpr Pid kStateTrackPid = 0x7ffffff0;

struct DurationEvent {
  std::string name;
  std::string category;
  Pid pid = 0;
  Tid tid = 0;
  int64_t start_ns = 0;
  int64_t duration_ns = 0;
  uint32_t cpu = 0;
  std::optional<uint32_t> exit_cpu;  // set when the op migrated
  int64_t iteration = kOutside;
  std::map<std::string, std::string> labels;  // op_type, backend, guid, phase, ...

  int64_t end_ns() const { return start_ns + duration_ns; }
  bool operator==(const DurationEvent&) const = default;
};

struct StateInterval {
  Tid tid = 0;
  ThreadState state = ThreadState::kUnknown;
  int64_t start_ns = 0;
  int64_t end_ns = 0;
  uint32_t cpu = 0;
  bool operator==(const StateInterval&) const = default;
};

struct StateTransition {
  uint64_t seq = 0;
  int64_t ts_ns = 0;
  ThreadState state = ThreadState::kUnknown;  // state after the event
  bool operator==(const StateTransition&) const = default;
};

struct ThreadStates {
  std::map<Tid, std::vector<StateInterval>> intervals;
  std::map<Tid, std::vector<StateTransition>> transitions;
  std::vector<std::string> anomalies;
};

// Walks the sched events touching each traced thread. Intervals cover
// [first event, last event] of the thread without gaps; zero-length ones
// are dropped.
ThreadStates DeriveThreadStates(const std::vector<RawEvent>& sched_events,
                                const std::set<Tid>& inference_tids, SchedSemantics semantics);

struct TimelineDoc {
  std::map<Tid, std::vector<DurationEvent>> tracks;
  std::map<Tid, std::vector<StateInterval>> states;
  std::vector<std::string> anomalies;

  // Anomalies are diagnostics and do not take part in equality.
  bool operator==(const TimelineDoc& o) const {
    return tracks == o.tracks && states == o.states;
  }
};

struct TimelineOptions {
  SchedSemantics semantics = SchedSemantics::kPaper;
};

TimelineDoc BuildTimeline(const TraceSession& session, const IngestResult& ingest,
                          const TimelineOptions& options = {});

// "1.5" for 1500 ns; exact, no exponent.
std::string NsToMicrosText(int64_t ns);

// Chrome Trace Event Format, complete ("X") events only plus "M" metadata.
std::string EmitChromeTrace(const TimelineDoc& doc);

}  // namespace profinfer

#endif  // PROFINFER_PROFTIME_H_
