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

#include "profinfer/proftime.h"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace profinfer {

namespace {

std::string Quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

std::string CpuSuffix(uint32_t cpu) { return " @cpu" + std::to_string(cpu); }

struct Walker {
  ThreadState state = ThreadState::kUnknown;
  uint32_t cpu = 0;
  int64_t since = 0;
  bool started = false;
};

}  // namespace

std::optional<SchedSemantics> ParseSchedSemantics(std::string_view name) {
  if (name == "paper") return SchedSemantics::kPaper;
  if (name == "kernel") return SchedSemantics::kKernel;
  return std::nullopt;
}

const char* SchedSemanticsName(SchedSemantics s) {
  return s == SchedSemantics::kPaper ? "paper" : "kernel";
}

ThreadStates DeriveThreadStates(const std::vector<RawEvent>& sched_events,
                                const std::set<Tid>& inference_tids, SchedSemantics semantics) {
  std::vector<const RawEvent*> events;
  for (const RawEvent& e : sched_events) {
    if (IsSchedKind(e.kind) && e.sched() != nullptr) events.push_back(&e);
  }
  std::stable_sort(events.begin(), events.end(), [](const RawEvent* a, const RawEvent* b) {
    return std::tie(a->ts_ns, a->seq) < std::tie(b->ts_ns, b->seq);
  });

  ThreadStates out;
  std::map<Tid, Walker> walkers;
  auto anomaly = [&](const RawEvent& e, Tid tid, const std::string& what) {
    out.anomalies.push_back("seq " + std::to_string(e.seq) + ": tid " + std::to_string(tid) + " " +
                            what + " while " + ThreadStateName(walkers[tid].state) +
                            "; state kept");
  };
  auto transition = [&](const RawEvent& e, Tid tid, ThreadState next) {
    Walker& w = walkers[tid];
    if (w.started && e.ts_ns > w.since) {
      out.intervals[tid].push_back({tid, w.state, w.since, e.ts_ns, w.cpu});
    }
    if (!w.started || e.ts_ns > w.since) w.since = e.ts_ns;
    w.started = true;
    w.state = next;
    w.cpu = e.cpu;
    out.transitions[tid].push_back({e.seq, e.ts_ns, next});
  };
  // Re-anchors the current state at |e| without changing it, so the tiling
  // still reaches the last event of the thread.
  auto keep = [&](const RawEvent& e, Tid tid) { transition(e, tid, walkers[tid].state); };

  for (const RawEvent* e : events) {
    const SchedPayload& s = *e->sched();
    if (e->kind == ProbeKind::kSchedWakeup) {
      if (!s.wakee_tid || !inference_tids.count(*s.wakee_tid)) continue;
      Tid t = *s.wakee_tid;
      if (walkers[t].state == ThreadState::kRunning) {
        anomaly(*e, t, "woken up");
        keep(*e, t);
      } else {
        transition(*e, t, ThreadState::kRunnable);
      }
      continue;
    }
    if (s.prev_tid && inference_tids.count(*s.prev_tid)) {
      Tid t = *s.prev_tid;
      ThreadState cur = walkers[t].state;
      if (cur != ThreadState::kRunning && cur != ThreadState::kUnknown) {
        anomaly(*e, t, "switched out");
        keep(*e, t);
      } else {
        int64_t ps = s.prev_state.value_or(0);
        ThreadState next;
        if (semantics == SchedSemantics::kPaper) {
          next = ps == 1 ? ThreadState::kRunnable : ThreadState::kIdle;
        } else {
          next = ps == 0 ? ThreadState::kRunnable : ThreadState::kIdle;
        }
        transition(*e, t, next);
      }
    }
    if (s.next_tid && inference_tids.count(*s.next_tid)) {
      Tid t = *s.next_tid;
      if (walkers[t].state == ThreadState::kRunning) {
        anomaly(*e, t, "switched in");
        keep(*e, t);
      } else {
        transition(*e, t, ThreadState::kRunning);
      }
    }
  }
  return out;
}

TimelineDoc BuildTimeline(const TraceSession& session, const IngestResult& ingest,
                          const TimelineOptions& options) {
  TimelineDoc doc;
  for (const IterationIndex& it : ingest.iterations) {
    DurationEvent d;
    d.category = kCategoryToken;
    d.pid = it.token_enter.pid;
    d.tid = it.token_enter.tid;
    d.start_ns = it.token_enter.ts_ns;
    d.duration_ns = it.duration_ns();
    d.cpu = it.token_enter.cpu;
    d.iteration = it.iteration;
    d.name = std::string("token ") + std::to_string(it.iteration) + " " + PhaseName(it.phase) +
             CpuSuffix(d.cpu);
    d.labels["phase"] = PhaseName(it.phase);
    d.labels["batch_size"] = std::to_string(it.batch_size);
    if (it.token_exit.cpu != d.cpu) d.exit_cpu = it.token_exit.cpu;
    doc.tracks[d.tid].push_back(std::move(d));
  }
  for (const GraphSpan& g : ingest.graph_spans) {
    DurationEvent d;
    d.category = kCategoryGraph;
    d.pid = g.enter.pid;
    d.tid = g.tid;
    d.start_ns = g.enter.ts_ns;
    d.duration_ns = g.exit.ts_ns - g.enter.ts_ns;
    d.cpu = g.enter.cpu;
    d.iteration = g.iteration;
    auto label = session.header.backend_names.find(g.backend_guid);
    std::string backend =
        label == session.header.backend_names.end() ? g.backend_guid : label->second;
    d.name = "graph " + backend + CpuSuffix(d.cpu);
    d.labels["guid"] = g.backend_guid;
    d.labels["backend"] = backend;
    if (g.exit.cpu != d.cpu) d.exit_cpu = g.exit.cpu;
    doc.tracks[d.tid].push_back(std::move(d));
  }
  for (const OpSpan& s : ingest.spans) {
    DurationEvent d;
    d.category = kCategoryOp;
    d.pid = s.enter.pid;
    d.tid = s.tid;
    d.start_ns = s.enter.ts_ns;
    d.duration_ns = s.elapsed_ns();
    d.cpu = s.enter.cpu;
    d.iteration = s.iteration;
    d.name = s.op_type.Name() + " " + s.op_name + CpuSuffix(d.cpu);
    d.labels["op_type"] = s.op_type.Name();
    d.labels["op_name"] = s.op_name;
    d.labels["backend"] = BackendName(s.backend);
    if (s.exit.cpu != d.cpu) d.exit_cpu = s.exit.cpu;
    doc.tracks[d.tid].push_back(std::move(d));
  }
  for (auto& [tid, events] : doc.tracks) {
    std::sort(events.begin(), events.end(), [](const DurationEvent& a, const DurationEvent& b) {
      return std::tie(a.start_ns, a.category, a.name) < std::tie(b.start_ns, b.category, b.name);
    });
  }

  std::vector<RawEvent> sched;
  for (const RawEvent& e : session.events) {
    if (IsSchedKind(e.kind)) sched.push_back(e);
  }
  ThreadStates states =
      DeriveThreadStates(sched, session.header.inference_tids, options.semantics);
  doc.states = std::move(states.intervals);
  doc.anomalies = std::move(states.anomalies);
  return doc;
}

std::string NsToMicrosText(int64_t ns) {
  std::string sign = ns < 0 ? "-" : "";
  uint64_t v = ns < 0 ? static_cast<uint64_t>(-(ns + 1)) + 1 : static_cast<uint64_t>(ns);
  std::string out = sign + std::to_string(v / 1000);
  uint64_t frac = v % 1000;
  if (frac == 0) return out;
  char buf[4];
  std::snprintf(buf, sizeof(buf), "%03u", static_cast<unsigned>(frac));
  std::string f(buf);
  while (!f.empty() && f.back() == '0') f.pop_back();
  return out + "." + f;
}

std::string EmitChromeTrace(const TimelineDoc& doc) {
  std::ostringstream os;
  os << "{\"displayTimeUnit\":\"ns\",\"traceEvents\":[";
  bool first = true;
  auto begin = [&]() {
    os << (first ? "\n" : ",\n");
    first = false;
  };
  auto metadata = [&](std::string_view kind, Pid pid, std::optional<Tid> tid,
                      const std::string& name) {
    begin();
    os << "{\"ph\":\"M\",\"name\":" << Quote(kind) << ",\"pid\":" << pid;
    if (tid) os << ",\"tid\":" << *tid;
    os << ",\"args\":{\"name\":" << Quote(name) << "}}";
  };

  std::set<Pid> pids;
  for (const auto& [tid, events] : doc.tracks) {
    for (const DurationEvent& d : events) pids.insert(d.pid);
  }
  for (Pid pid : pids) metadata("process_name", pid, std::nullopt, "inference " + std::to_string(pid));
  if (!doc.states.empty()) {
    metadata("process_name", kStateTrackPid, std::nullopt, "thread states");
    for (const auto& [tid, intervals] : doc.states) {
      metadata("thread_name", kStateTrackPid, tid, "state " + std::to_string(tid));
    }
  }

  for (const auto& [tid, events] : doc.tracks) {
    for (const DurationEvent& d : events) {
      begin();
      os << "{\"ph\":\"X\",\"name\":" << Quote(d.name) << ",\"cat\":" << Quote(d.category)
         << ",\"ts\":" << NsToMicrosText(d.start_ns) << ",\"dur\":"
         << NsToMicrosText(d.duration_ns) << ",\"pid\":" << d.pid << ",\"tid\":" << d.tid
         << ",\"args\":{\"cpu\":" << d.cpu;
      if (d.exit_cpu) os << ",\"exit_cpu\":" << *d.exit_cpu;
      os << ",\"iteration\":" << d.iteration;
      for (const auto& [k, v] : d.labels) os << "," << Quote(k) << ":" << Quote(v);
      os << "}}";
    }
  }
  for (const auto& [tid, intervals] : doc.states) {
    for (const StateInterval& s : intervals) {
      begin();
      os << "{\"ph\":\"X\",\"name\":" << Quote(ThreadStateName(s.state))
         << ",\"cat\":" << Quote(kCategoryState) << ",\"ts\":" << NsToMicrosText(s.start_ns)
         << ",\"dur\":" << NsToMicrosText(s.end_ns - s.start_ns) << ",\"pid\":" << kStateTrackPid
         << ",\"tid\":" << s.tid << ",\"args\":{\"cpu\":" << s.cpu << "}}";
    }
  }
  os << "\n]}\n";
  return os.str();
}

}  // namespace profinfer
