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
#include <random>

#include <gtest/gtest.h>

#include "profinfer/error.h"
#include "profinfer/synth_workload.h"
#include "profinfer/trace_ingest.h"
#include "testing/fixtures.h"
#include "testing/random_specs.h"

namespace profinfer {
namespace {

using testing::BasicHeader;
using testing::EventBuilder;

constexpr char kGuid[] = "00000000000c0001";

TEST(GroupAndSort, InterleavedThreadsAreSplitAndOrdered) {
  TraceSession s;
  s.header = BasicHeader({1, 2});
  EventBuilder b(&s);
  b.Op(ProbeKind::kOpEnter, 30, 2, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpEnter, 10, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 40, 2, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 20, 1, 0xa, OpKind::kAdd, "a");
  ThreadGroups g = GroupAndSort(s);
  ASSERT_EQ(g.inference.size(), 2u);
  EXPECT_EQ(g.inference[1][0].ts_ns, 10);
  EXPECT_EQ(g.inference[1][1].ts_ns, 20);
  EXPECT_EQ(g.inference[2][0].ts_ns, 30);
  EXPECT_EQ(g.inference[2][1].ts_ns, 40);
}

TEST(GroupAndSort, EqualTimestampsKeepSeqOrder) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  for (int i = 0; i < 6; ++i) {
    b.Op(i % 2 ? ProbeKind::kOpExit : ProbeKind::kOpEnter, 50, 1, 0x100 + i / 2, OpKind::kAdd, "x");
  }
  std::mt19937_64 rng(3);
  std::shuffle(s.events.begin(), s.events.end(), rng);
  std::vector<RawEvent> sorted = GroupAndSort(s).inference[1];
  ASSERT_EQ(sorted.size(), 6u);
  for (uint64_t i = 0; i < 6; ++i) EXPECT_EQ(sorted[i].seq, i);
  // Pairing on equal timestamps follows emission order too.
  IngestResult r = Ingest(s);
  EXPECT_EQ(r.spans.size(), 3u);
  EXPECT_TRUE(r.orphans.empty());
}

TEST(GroupAndSort, UntracedSchedOnlyThreadIsNotAnInferenceThread) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Op(ProbeKind::kOpEnter, 1, 1, 0xa, OpKind::kAdd, "a");
  RawEvent& sw = b.Switch(2, 77, 1, 0);
  sw.tid = 77;
  ThreadGroups g = GroupAndSort(s);
  EXPECT_EQ(g.inference.count(77), 0u);
  EXPECT_EQ(g.other.count(77), 1u);
}

TEST(AssignIterations, PrefillThenDecode) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Token(ProbeKind::kTokenEnter, 0, 1, 32);
  b.Op(ProbeKind::kOpEnter, 5, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 6, 1, 0xa, OpKind::kAdd, "a");
  b.Token(ProbeKind::kTokenExit, 10, 1, 32);
  b.Op(ProbeKind::kOpEnter, 12, 1, 0xa, OpKind::kAdd, "a");  // between tokens
  b.Op(ProbeKind::kOpExit, 13, 1, 0xa, OpKind::kAdd, "a");
  b.Token(ProbeKind::kTokenEnter, 20, 1, 1);
  b.Op(ProbeKind::kOpEnter, 21, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 22, 1, 0xa, OpKind::kAdd, "a");
  b.Token(ProbeKind::kTokenExit, 30, 1, 1);
  IterationResult r = AssignIterations(s);
  ASSERT_EQ(r.iterations.size(), 2u);
  EXPECT_EQ(r.iterations[0].phase, Phase::kPrefill);
  EXPECT_EQ(r.iterations[0].batch_size, 32u);
  EXPECT_EQ(r.iterations[1].phase, Phase::kDecode);
  EXPECT_EQ(r.iterations[1].duration_ns(), 10);
  EXPECT_EQ(r.annotations.at(1), 0);
  EXPECT_EQ(r.annotations.at(4), kOutside);
  EXPECT_EQ(r.annotations.at(7), 1);
}

TEST(AssignIterations, SingleTokenPromptIsStillPrefill) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Token(ProbeKind::kTokenEnter, 0, 1, 1);
  b.Token(ProbeKind::kTokenExit, 10, 1, 1);
  b.Token(ProbeKind::kTokenEnter, 20, 1, 1);
  b.Token(ProbeKind::kTokenExit, 30, 1, 1);
  IterationResult r = AssignIterations(s);
  EXPECT_EQ(r.iterations[0].phase, Phase::kPrefill);
  EXPECT_EQ(r.iterations[1].phase, Phase::kDecode);
}

TEST(AssignIterations, NoTokensMeansEverythingOutside) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Op(ProbeKind::kOpEnter, 1, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 2, 1, 0xa, OpKind::kAdd, "a");
  IngestResult r = Ingest(s);
  EXPECT_TRUE(r.iterations.empty());
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].iteration, kOutside);
  EXPECT_TRUE(AggregateOps(r, 0).empty());
  EXPECT_EQ(r.FindIteration(0), nullptr);
}

TEST(AssignIterations, ExitWithoutEnterNamesSeq) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Skip(4);
  b.Token(ProbeKind::kTokenExit, 10, 1, 1);
  try {
    AssignIterations(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnbalancedProbe);
    EXPECT_NE(std::string(e.what()).find("seq 4"), std::string::npos) << e.what();
  }
}

TEST(AssignIterations, FourHundredFiftyDecodes) {
  ModelSpec model = *ModelPreset("dense2");
  model.layers = 1;
  RunSpec run;
  run.gen_len = 450;
  run.nthreads = 1;
  run.flags = {false, false, false};
  IngestResult r = Ingest(GenerateSession(model, run).session);
  ASSERT_EQ(r.iterations.size(), 451u);
  size_t decodes = std::count_if(r.iterations.begin(), r.iterations.end(),
                                 [](const IterationIndex& it) { return it.phase == Phase::kDecode; });
  EXPECT_EQ(decodes, 450u);
}

TEST(PairSpans, PmcDeltaIsExitMinusEnter) {
  TraceSession s;
  s.header = BasicHeader({1}, true);
  s.header.pmc_specs = {CanonicalPmcSpecs()[0]};
  EventBuilder b(&s);
  RawEvent& enter = b.Op(ProbeKind::kOpEnter, 1, 1, 0xa, OpKind::kAdd, "a");
  std::get<OpPayload>(enter.payload).pmc = std::vector<uint64_t>{100};
  RawEvent& exit = b.Op(ProbeKind::kOpExit, 2, 1, 0xa, OpKind::kAdd, "a");
  std::get<OpPayload>(exit.payload).pmc = std::vector<uint64_t>{160};
  IngestResult r = Ingest(s);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].pmc_delta, (std::vector<int64_t>{60}));
}

TEST(PairSpans, EnterEnterAcrossSeqGapOrphansTheFirst) {
  TraceSession s;
  s.header = BasicHeader({1});
  s.header.flags.perf_buffer = true;
  EventBuilder b(&s);
  b.Op(ProbeKind::kOpEnter, 1, 1, 0xa, OpKind::kAdd, "a");
  b.Skip();  // the lost exit
  b.Op(ProbeKind::kOpEnter, 3, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 4, 1, 0xa, OpKind::kAdd, "a");
  IngestResult r = Ingest(s);
  ASSERT_EQ(r.orphans.size(), 1u);
  EXPECT_EQ(r.orphans[0].seq, 0u);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].enter.seq, 2u);
  EXPECT_EQ(r.spans[0].exit.seq, 3u);
}

TEST(PairSpans, MismatchWithoutLossIsStructural) {
  TraceSession s;
  s.header = BasicHeader({1});
  s.header.flags.perf_buffer = true;  // losses would be visible as gaps
  EventBuilder b(&s);
  b.Op(ProbeKind::kOpEnter, 1, 1, 0xa, OpKind::kAdd, "a");
  b.Op(ProbeKind::kOpExit, 2, 1, 0xb, OpKind::kAdd, "b");
  try {
    Ingest(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStructural);
  }
}

TEST(PairSpans, InjectedDropsFromTheGeneratorBecomeOrphans) {
  RunSpec run;
  run.drop_rate = 0.05;
  run.seed = 17;
  SynthOutput out = GenerateSession(*ModelPreset("dense2"), run);
  ASSERT_FALSE(out.truth.dropped_seqs.empty());
  IngestResult r = Ingest(out.session);
  EXPECT_FALSE(r.orphans.empty());
  // Each orphan lost its partner, so a dropped seq sits next to it on its
  // thread: between it and the following event of the same thread.
  for (const RawEvent& o : r.orphans) {
    const std::vector<RawEvent>& list = r.groups.inference.at(o.tid);
    auto it = std::find_if(list.begin(), list.end(),
                           [&](const RawEvent& e) { return e.seq == o.seq; });
    ASSERT_NE(it, list.end());
    uint64_t lo = it == list.begin() ? 0 : std::prev(it)->seq;
    uint64_t hi = std::next(it) == list.end() ? UINT64_MAX : std::next(it)->seq;
    bool gap = std::any_of(out.truth.dropped_seqs.begin(), out.truth.dropped_seqs.end(),
                           [&](uint64_t d) { return d > lo && d < hi; });
    EXPECT_TRUE(gap) << "orphan seq " << o.seq;
  }
}

TEST(PairSpans, OneOpOnFourThreads) {
  RunSpec run;
  run.nthreads = 4;
  SynthOutput out = GenerateSession(*ModelPreset("dense2"), run);
  IngestResult r = Ingest(out.session);
  Addr addr = out.truth.iterations[1].ops[0].addr;
  std::vector<const OpSpan*> found;
  for (const OpSpan& sp : r.spans) {
    if (sp.op_addr == addr && sp.iteration == 1) found.push_back(&sp);
  }
  ASSERT_EQ(found.size(), 4u);
  std::set<Tid> tids;
  for (const OpSpan* sp : found) tids.insert(sp->tid);
  EXPECT_EQ(tids.size(), 4u);
}

TEST(Ingest, GraphSpansPairPerThread) {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  b.Token(ProbeKind::kTokenEnter, 0, 1, 1);
  b.Graph(ProbeKind::kGraphEnter, 1, 1, kGuid);
  b.Graph(ProbeKind::kGraphExit, 5, 1, kGuid);
  b.Token(ProbeKind::kTokenExit, 9, 1, 1);
  IngestResult r = Ingest(s);
  ASSERT_EQ(r.graph_spans.size(), 1u);
  EXPECT_EQ(r.graph_spans[0].iteration, 0);
  EXPECT_EQ(r.graph_spans[0].backend_guid, kGuid);
}

TEST(OpElapsed, Examples) {
  auto span = [](int64_t a, int64_t z) {
    OpSpan s;
    s.enter.ts_ns = a;
    s.exit.ts_ns = z;
    return s;
  };
  OpSpan one = span(10, 25), two = span(12, 30);
  EXPECT_EQ(OpElapsed({&one}), 15);
  EXPECT_EQ(OpElapsed({&one, &two}), 20);
  EXPECT_EQ(OpElapsed({&one, &one, &one, &one}), 15);
  EXPECT_THROW(OpElapsed({}), Error);
}

// Random generated sessions, with and without loss.
class IngestProperties : public ::testing::TestWithParam<int> {};

TEST_P(IngestProperties, ConservationPurityAndIterationAgreement) {
  std::mt19937_64 rng(1000 + GetParam());
  testing::RandomSpec spec = testing::DrawSpec(rng);
  spec.run.drop_rate = GetParam() % 2 ? 0.03 : 0.0;
  TraceSession s = GenerateSession(spec.model, spec.run).session;
  IngestResult r = Ingest(s);

  size_t other = 0;
  for (const RawEvent& e : s.events) other += IsOpKind(e.kind) ? 0 : 1;
  EXPECT_EQ(s.events.size(), 2 * r.spans.size() + r.orphans.size() + other) << spec.Describe();
  if (spec.run.drop_rate == 0) EXPECT_TRUE(r.orphans.empty()) << spec.Describe();

  for (const OpSpan& sp : r.spans) {
    EXPECT_EQ(sp.iteration, r.IterationOf(sp.enter.seq));
    EXPECT_EQ(sp.iteration, r.IterationOf(sp.exit.seq));
    EXPECT_GE(sp.exit.ts_ns, sp.enter.ts_ns);
    EXPECT_EQ(sp.enter.tid, sp.exit.tid);
    EXPECT_EQ(sp.enter.op()->op_addr, sp.exit.op()->op_addr);
  }

  IngestResult again = Ingest(s);
  ASSERT_EQ(again.spans.size(), r.spans.size());
  for (size_t i = 0; i < r.spans.size(); ++i) {
    EXPECT_EQ(again.spans[i].enter, r.spans[i].enter);
    EXPECT_EQ(again.spans[i].exit, r.spans[i].exit);
    EXPECT_EQ(again.spans[i].pmc_delta, r.spans[i].pmc_delta);
  }
  EXPECT_EQ(again.orphans, r.orphans);
}

INSTANTIATE_TEST_SUITE_P(Random, IngestProperties, ::testing::Range(0, 24));

}  // namespace
}  // namespace profinfer
