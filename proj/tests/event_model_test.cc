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

#include "profinfer/config.h"
#include "profinfer/error.h"
#include "profinfer/event_model.h"
#include "profinfer/session_io.h"
#include "profinfer/synth_workload.h"
#include "testing/fixtures.h"

namespace profinfer {
namespace {

using testing::BasicHeader;
using testing::EventBuilder;

TEST(ValidateSession, EmptySessionIsValid) {
  TraceSession s;
  EXPECT_TRUE(ValidateSession(s).empty());
}

TEST(ValidateSession, PmcWithFlagOffNamesTheSeq) {
  TraceSession s;
  s.header = BasicHeader({1});
  s.header.pmc_specs = CanonicalPmcSpecs();  // lengths agree; only the flag is wrong
  EventBuilder b(&s);
  b.Token(ProbeKind::kTokenEnter, 0, 1, 1);
  RawEvent& e = b.Op(ProbeKind::kOpEnter, 10, 1, 0x10, OpKind::kAdd, "add");
  std::get<OpPayload>(e.payload).pmc = std::vector<uint64_t>(5, 1);
  std::vector<Violation> v = ValidateSession(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].seq, 1u);
  EXPECT_NE(v[0].message.find("seq 1"), std::string::npos);
}

TEST(ValidateSession, ShortExpertListFromGeneratedSession) {
  SynthOutput out = GenerateSession(*ModelPreset("moe"), RunSpec{});
  ASSERT_TRUE(ValidateSession(out.session).empty());
  uint64_t flipped = 0;
  for (RawEvent& e : out.session.events) {
    if (e.kind != ProbeKind::kOpEnter) continue;
    auto& p = std::get<OpPayload>(e.payload);
    if (p.expert_ids) {
      ASSERT_EQ(p.expert_ids->size(), 4u);
      p.expert_ids->pop_back();
      flipped = e.seq;
      break;
    }
  }
  std::vector<Violation> v = ValidateSession(out.session);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].seq, flipped);
}

TEST(ValidateSession, EachInvariantIsChecked) {
  TraceSession s;
  s.header = BasicHeader({1});
  s.header.flags.str = false;
  EventBuilder b(&s);
  b.Token(ProbeKind::kTokenEnter, -1, 1, 0);                 // negative ts, batch 0
  b.Graph(ProbeKind::kGraphEnter, 1, 1, "ABCDEF0123456789");  // upper case guid
  RawEvent& op = b.Op(ProbeKind::kOpEnter, 2, 2, 0x10, OpKind::kAdd, std::string(64, 'x'));
  std::get<OpPayload>(op.payload).dims = Dims{1, 1, 1, 1};       // str off; tid 2 untraced
  std::get<OpPayload>(op.payload).expert_ids = std::vector<uint32_t>{1};  // not MUL_MAT_ID
  RawEvent& sw = b.Switch(3, 1, 2, 0);
  std::get<SchedPayload>(sw.payload).wakee_tid = 5;
  RawEvent mismatched = sw;
  mismatched.kind = ProbeKind::kOpExit;
  mismatched.seq = 99;
  s.events.push_back(mismatched);
  RawEvent dup = s.events[0];
  dup.ts_ns = 0;
  dup.payload = TokenPayload{1};
  s.events.push_back(dup);  // same seq as the first event

  std::vector<Violation> v = ValidateSession(s);
  std::string all;
  for (const auto& x : v) all += x.message + "\n";
  for (const char* needle :
       {"negative ts_ns", "batch_size must be >= 1", "16 lowercase hex", "outside inference_tids",
        "longer than 63", "dims present while str", "expert_ids on non-MUL_MAT_ID",
        "SchedSwitch must carry exactly", "payload does not match", "duplicate seq"}) {
    EXPECT_NE(all.find(needle), std::string::npos) << needle << "\n" << all;
  }
}

// Permutations that keep seq values must not change the result.
TEST(ValidateSession, PropertyOrderIndependent) {
  std::mt19937_64 rng(11);
  TraceSession s = GenerateSession(*ModelPreset("dense2"), RunSpec{}).session;
  // Seed a few violations so the list is non-trivial.
  for (size_t i = 0; i < s.events.size(); i += 97) s.events[i].ts_ns = -5;
  s.events.push_back(s.events[3]);
  std::vector<Violation> ref = ValidateSession(s);
  ASSERT_GT(ref.size(), 3u);
  for (int round = 0; round < 20; ++round) {
    std::shuffle(s.events.begin(), s.events.end(), rng);
    EXPECT_EQ(ValidateSession(s), ref);
  }
}

TEST(PmcSpecs, CanonicalUnitsMatchCounterTable) {
  std::vector<PmcSpec> specs = CanonicalPmcSpecs();
  ASSERT_EQ(specs.size(), 5u);
  EXPECT_EQ(specs[0].name, "l3d_cache_refill");
  EXPECT_EQ(PmcUnitText(specs[0].unit), "bytes(64)");
  EXPECT_EQ(specs[1].name, "mem_access_wr");
  EXPECT_EQ(PmcUnitText(specs[1].unit), "bytes(16)");
  EXPECT_EQ(specs[2].name, "major-faults");
  EXPECT_EQ(PmcUnitText(specs[2].unit), "pages(1)");
  EXPECT_EQ(specs[3].name, "cycles");
  EXPECT_EQ(PmcUnitText(specs[3].unit), "cycles(1)");
  EXPECT_EQ(specs[4].name, "idle-backend-cycles");
  EXPECT_EQ(PmcUnitText(specs[4].unit), "cycles(1)");
  EXPECT_EQ(specs[2].scope, PmcScope::kSoftware);
}

TEST(OpType, NamesAndUnknownEscape) {
  EXPECT_EQ(OpType(OpKind::kMulMat).Name(), "MUL_MAT");
  EXPECT_EQ(OpType::FromName("SOFT_MAX"), OpType(OpKind::kSoftMax));
  OpType u = OpType::Unknown(77);
  EXPECT_EQ(u.Name(), "UNKNOWN(77)");
  EXPECT_EQ(OpType::FromName("UNKNOWN(77)"), u);
  EXPECT_NE(u, OpType::Unknown(78));
}

TEST(SessionIo, JsonlHeaderLineAndVersion) {
  TraceSession s;
  s.header = BasicHeader({1, 2}, true);
  std::string text = EncodeSessionJsonl(s);
  EXPECT_EQ(text.rfind("{\"profinfer_header\":", 0), 0u);
  EXPECT_NE(text.find("\"v\":1"), std::string::npos);
}

TEST(SessionIo, PropertyRoundTripBothFormats) {
  for (const char* preset : {"dense2", "moe", "gemma"}) {
    RunSpec run;
    run.sched_events = true;
    run.drop_rate = 0.02;
    run.gpu_layers = 1;
    TraceSession s = GenerateSession(*ModelPreset(preset), run).session;
    EXPECT_EQ(DecodeSessionJsonl(EncodeSessionJsonl(s)), s) << preset;
    EXPECT_EQ(DecodeSessionBinary(EncodeSessionBinary(s)), s) << preset;
  }
}

TEST(SessionIo, MalformedInputIsAParseError) {
  try {
    DecodeSessionJsonl("{\"profinfer_header\": 5}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  EXPECT_THROW(DecodeSessionBinary("PFIS"), Error);
}

TEST(Config, ParsesSectionsArraysAndComments) {
  ConfigTable t = ConfigTable::Parse(
      "levels = [\"token\", \"op\"]  # comment\n[qos]\ntarget_tps = 5.0\nwindow = 8\n"
      "[flags]\nstr = true\n");
  EXPECT_EQ(t.GetStringList("levels"), (std::vector<std::string>{"token", "op"}));
  EXPECT_DOUBLE_EQ(t.GetDouble("qos.target_tps", 0), 5.0);
  EXPECT_EQ(t.GetInt("qos.window", 0), 8);
  EXPECT_TRUE(t.GetBool("flags.str", false));
  EXPECT_EQ(t.GetInt("missing", 3), 3);
  EXPECT_THROW(ConfigTable::Parse("novalue\n"), Error);
}

}  // namespace
}  // namespace profinfer
