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

#include "profinfer/trace_ingest.h"

#include <algorithm>
#include <tuple>

#include "profinfer/error.h"
#include "profinfer/session_io.h"

namespace profinfer {

namespace {

bool TimeOrder(const RawEvent& a, const RawEvent& b) {
  return std::tie(a.ts_ns, a.seq) < std::tie(b.ts_ns, b.seq);
}

// Answers "is some seq value missing strictly between a and b?".
class SeqGaps {
 public:
  explicit SeqGaps(const TraceSession& session) {
    seqs_.reserve(session.events.size());
    for (const RawEvent& e : session.events) seqs_.push_back(e.seq);
    std::sort(seqs_.begin(), seqs_.end());
  }

  bool Between(uint64_t a, uint64_t b) const {
    if (a > b) std::swap(a, b);
    if (b - a <= 1) return false;
    auto lo = std::lower_bound(seqs_.begin(), seqs_.end(), a);
    auto hi = std::upper_bound(seqs_.begin(), seqs_.end(), b);
    uint64_t present = static_cast<uint64_t>(hi - lo);
    return present < b - a + 1;
  }

 private:
  std::vector<uint64_t> seqs_;
};

std::string Describe(const RawEvent& e) {
  std::string s = "seq " + std::to_string(e.seq) + " (" + ProbeKindName(e.kind);
  if (const OpPayload* op = e.op()) s += " " + op->op_name + " " + AddrToHex(op->op_addr);
  return s + ", tid " + std::to_string(e.tid) + ")";
}

int64_t Lookup(const IterationAnnotations& annotations, uint64_t seq) {
  auto it = annotations.find(seq);
  return it == annotations.end() ? kOutside : it->second;
}

std::optional<std::vector<int64_t>> PmcDelta(const OpPayload& enter, const OpPayload& exit) {
  if (!enter.pmc || !exit.pmc || enter.pmc->size() != exit.pmc->size()) return std::nullopt;
  std::vector<int64_t> delta(enter.pmc->size());
  for (size_t i = 0; i < delta.size(); ++i) {
    delta[i] = static_cast<int64_t>((*exit.pmc)[i] - (*enter.pmc)[i]);
  }
  return delta;
}

}  // namespace

const char* PhaseName(Phase phase) { return phase == Phase::kPrefill ? "prefill" : "decode"; }

ThreadGroups GroupAndSort(const TraceSession& session) {
  ThreadGroups g;
  for (const RawEvent& e : session.events) {
    bool inference = session.header.inference_tids.count(e.tid) > 0;
    (inference ? g.inference : g.other)[e.tid].push_back(e);
  }
  for (auto* groups : {&g.inference, &g.other}) {
    for (auto& [tid, events] : *groups) std::stable_sort(events.begin(), events.end(), TimeOrder);
  }
  return g;
}

IterationResult AssignIterations(const TraceSession& session) {
  std::vector<const RawEvent*> tokens;
  for (const RawEvent& e : session.events) {
    if (IsTokenKind(e.kind)) tokens.push_back(&e);
  }
  std::stable_sort(tokens.begin(), tokens.end(),
                   [](const RawEvent* a, const RawEvent* b) { return TimeOrder(*a, *b); });

  IterationResult out;
  const RawEvent* open = nullptr;
  for (const RawEvent* t : tokens) {
    if (t->kind == ProbeKind::kTokenEnter) {
      if (open != nullptr) {
        throw Error(ErrorCode::kUnbalancedProbe,
                    "TokenEnter at seq " + std::to_string(t->seq) +
                        " while the token opened at seq " + std::to_string(open->seq) +
                        " is still running");
      }
      open = t;
      continue;
    }
    if (open == nullptr) {
      throw Error(ErrorCode::kUnbalancedProbe,
                  "TokenExit at seq " + std::to_string(t->seq) + " has no matching TokenEnter");
    }
    IterationIndex it;
    it.iteration = static_cast<int64_t>(out.iterations.size());
    it.batch_size = open->token()->batch_size;
    it.phase = (it.batch_size > 1 || it.iteration == 0) ? Phase::kPrefill : Phase::kDecode;
    it.token_enter = *open;
    it.token_exit = *t;
    out.iterations.push_back(std::move(it));
    open = nullptr;
  }

  for (const RawEvent& e : session.events) {
    if (!IsOpKind(e.kind) && !IsGraphKind(e.kind)) continue;
    // Last iteration entered at or before e.
    auto pos = std::upper_bound(
        out.iterations.begin(), out.iterations.end(), e.ts_ns,
        [](int64_t ts, const IterationIndex& it) { return ts < it.token_enter.ts_ns; });
    int64_t iteration = kOutside;
    if (pos != out.iterations.begin()) {
      const IterationIndex& it = *std::prev(pos);
      if (e.ts_ns <= it.token_exit.ts_ns) iteration = it.iteration;
    }
    out.annotations[e.seq] = iteration;
  }
  return out;
}

PairResult PairSpans(const TraceSession& session, const ThreadGroups& groups,
                     const IterationAnnotations& annotations) {
  SeqGaps gaps(session);
  // The ring transport loses records without telling anyone.
  bool silent_loss = !session.header.flags.perf_buffer;
  auto may_have_lost = [&](uint64_t a, uint64_t b) {
    return silent_loss || gaps.Between(a, b);
  };

  PairResult out;
  for (const auto& [tid, events] : groups.inference) {
    const RawEvent* pending = nullptr;
    const RawEvent* prev_op = nullptr;
    const RawEvent* pending_graph = nullptr;
    for (const RawEvent& e : events) {
      if (IsGraphKind(e.kind)) {
        if (e.kind == ProbeKind::kGraphEnter) {
          if (pending_graph) out.graph_orphans.push_back(*pending_graph);
          pending_graph = &e;
        } else if (pending_graph &&
                   pending_graph->graph()->backend_guid == e.graph()->backend_guid) {
          GraphSpan g;
          g.backend_guid = e.graph()->backend_guid;
          g.tid = tid;
          g.enter = *pending_graph;
          g.exit = e;
          int64_t a = Lookup(annotations, g.enter.seq);
          g.iteration = a == Lookup(annotations, g.exit.seq) ? a : kOutside;
          out.graph_spans.push_back(std::move(g));
          pending_graph = nullptr;
        } else {
          if (pending_graph) out.graph_orphans.push_back(*pending_graph);
          out.graph_orphans.push_back(e);
          pending_graph = nullptr;
        }
        continue;
      }
      if (!IsOpKind(e.kind)) continue;

      if (e.kind == ProbeKind::kOpEnter) {
        if (pending != nullptr) {
          if (!may_have_lost(pending->seq, e.seq)) {
            throw Error(ErrorCode::kStructural, "OpEnter " + Describe(e) +
                                                    " while " + Describe(*pending) +
                                                    " has not exited and no record is missing");
          }
          out.orphans.push_back(*pending);
        }
        pending = &e;
      } else if (pending == nullptr) {
        if (prev_op != nullptr && !may_have_lost(prev_op->seq, e.seq)) {
          throw Error(ErrorCode::kStructural,
                      "OpExit " + Describe(e) + " has no enter and no record is missing");
        }
        out.orphans.push_back(e);
      } else if (pending->op()->op_addr != e.op()->op_addr) {
        if (!may_have_lost(pending->seq, e.seq)) {
          throw Error(ErrorCode::kStructural, "OpExit " + Describe(e) +
                                                  " does not match pending " +
                                                  Describe(*pending));
        }
        out.orphans.push_back(*pending);
        out.orphans.push_back(e);
        pending = nullptr;
      } else {
        OpSpan s;
        const OpPayload& op = *pending->op();
        s.op_addr = op.op_addr;
        s.op_type = op.op_type;
        s.op_name = op.op_name;
        s.backend = op.backend;
        s.tid = tid;
        s.enter = *pending;
        s.exit = e;
        int64_t a = Lookup(annotations, s.enter.seq);
        s.iteration = a == Lookup(annotations, s.exit.seq) ? a : kOutside;
        s.pmc_delta = PmcDelta(op, *e.op());
        out.spans.push_back(std::move(s));
        pending = nullptr;
      }
      prev_op = &e;
    }
    if (pending != nullptr) out.orphans.push_back(*pending);
    if (pending_graph != nullptr) out.graph_orphans.push_back(*pending_graph);
  }
  auto by_seq = [](const RawEvent& a, const RawEvent& b) { return a.seq < b.seq; };
  std::sort(out.orphans.begin(), out.orphans.end(), by_seq);
  std::sort(out.graph_orphans.begin(), out.graph_orphans.end(), by_seq);
  return out;
}

const IterationIndex* IngestResult::FindIteration(int64_t iteration) const {
  if (iteration < 0 || static_cast<size_t>(iteration) >= iterations.size()) return nullptr;
  return &iterations[static_cast<size_t>(iteration)];
}

int64_t IngestResult::IterationOf(uint64_t seq) const { return Lookup(annotations, seq); }

IngestResult Ingest(const TraceSession& session) {
  IngestResult r;
  r.groups = GroupAndSort(session);
  IterationResult iters = AssignIterations(session);
  r.iterations = std::move(iters.iterations);
  r.annotations = std::move(iters.annotations);
  PairResult pairs = PairSpans(session, r.groups, r.annotations);
  r.spans = std::move(pairs.spans);
  r.orphans = std::move(pairs.orphans);
  r.graph_spans = std::move(pairs.graph_spans);
  r.graph_orphans = std::move(pairs.graph_orphans);
  return r;
}

int64_t OpElapsed(const std::vector<const OpSpan*>& spans) {
  if (spans.empty()) throw Error(ErrorCode::kDomain, "op elapsed needs at least one span");
  int64_t first = spans.front()->enter.ts_ns;
  int64_t last = spans.front()->exit.ts_ns;
  for (const OpSpan* s : spans) {
    first = std::min(first, s->enter.ts_ns);
    last = std::max(last, s->exit.ts_ns);
  }
  return last - first;
}

std::vector<OpAggregate> AggregateOps(const IngestResult& ingest, int64_t iteration) {
  std::map<Addr, OpAggregate> by_addr;
  for (const OpSpan& s : ingest.spans) {
    if (s.iteration != iteration) continue;
    OpAggregate& a = by_addr[s.op_addr];
    a.spans.push_back(&s);
  }
  std::vector<OpAggregate> out;
  out.reserve(by_addr.size());
  for (auto& [addr, a] : by_addr) {
    std::sort(a.spans.begin(), a.spans.end(), [](const OpSpan* x, const OpSpan* y) {
      return TimeOrder(x->enter, y->enter);
    });
    const OpSpan& head = *a.spans.front();
    const OpPayload& op = head.payload();
    a.op_addr = addr;
    a.op_type = op.op_type;
    a.op_name = op.op_name;
    a.backend = op.backend;
    a.dims = op.dims;
    a.src_addrs = op.src_addrs;
    a.first_enter_ns = head.enter.ts_ns;
    a.elapsed_ns = OpElapsed(a.spans);
    for (const OpSpan* s : a.spans) {
      if (!s->pmc_delta) continue;
      if (!a.pmc_totals) a.pmc_totals = std::vector<int64_t>(s->pmc_delta->size(), 0);
      for (size_t i = 0; i < s->pmc_delta->size() && i < a.pmc_totals->size(); ++i) {
        (*a.pmc_totals)[i] += (*s->pmc_delta)[i];
      }
    }
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(), [](const OpAggregate& x, const OpAggregate& y) {
    return TimeOrder(x.spans.front()->enter, y.spans.front()->enter);
  });
  return out;
}

}  // namespace profinfer
