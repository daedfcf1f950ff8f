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


#include "testing/fixtures.h"

namespace profinfer::testing {

RawEvent& EventBuilder::Push(RawEvent e) {
  e.pid = pid_;
  e.seq = next_seq_++;
  s_->events.push_back(std::move(e));
  return s_->events.back();
}

RawEvent& EventBuilder::Token(ProbeKind kind, int64_t ts, Tid tid, uint32_t batch, uint32_t cpu) {
  return Push({kind, ts, 0, tid, cpu, 0, TokenPayload{batch}});
}

RawEvent& EventBuilder::Graph(ProbeKind kind, int64_t ts, Tid tid, const std::string& guid,
                              uint32_t cpu) {
  return Push({kind, ts, 0, tid, cpu, 0, GraphPayload{guid}});
}

RawEvent& EventBuilder::Op(ProbeKind kind, int64_t ts, Tid tid, Addr addr, OpType type,
                           const std::string& name, uint32_t cpu) {
  OpPayload p;
  p.op_addr = addr;
  p.op_type = type;
  p.op_name = name;
  return Push({kind, ts, 0, tid, cpu, 0, std::move(p)});
}

RawEvent& EventBuilder::Switch(int64_t ts, Tid prev, Tid next, int64_t prev_state, uint32_t cpu) {
  return Push({ProbeKind::kSchedSwitch, ts, 0, prev, cpu, 0,
               SchedPayload::Switch(prev, next, prev_state)});
}

RawEvent& EventBuilder::Wakeup(int64_t ts, Tid wakee, uint32_t cpu) {
  return Push({ProbeKind::kSchedWakeup, ts, 0, 0, cpu, 0, SchedPayload::Wakeup(wakee)});
}

SessionHeader BasicHeader(std::vector<Tid> tids, bool pmc) {
  SessionHeader h;
  h.flags.str = true;
  h.flags.pmc = pmc;
  if (pmc) h.pmc_specs = CanonicalPmcSpecs();
  h.inference_tids.insert(tids.begin(), tids.end());
  h.nthreads = static_cast<uint32_t>(tids.size());
  return h;
}

TraceSession LlamaAttentionFixture() {
  TraceSession s;
  s.header = BasicHeader({1});
  EventBuilder b(&s);
  const OpType kReshape = OpType::Unknown(31);
  struct Row {
    OpType type;
    const char* name;
    std::vector<Addr> srcs;
  };
  auto op = [](int i) { return Addr{0x5000} + static_cast<Addr>(i) * 0x100; };
  const Addr embd_w = 0x9000, tokens = 0x9100, norm_w = 0x9200, wq = 0x9300, wk = 0x9400,
             wv = 0x9500, pos = 0x9600;
  const std::vector<Row> rows = {
      {OpKind::kGetRows, "inp_embd", {embd_w, tokens}},
      {OpKind::kRmsNorm, "norm-0", {op(0)}},
      {OpKind::kMul, "attn_norm-0", {op(1), norm_w}},
      {OpKind::kMulMat, "Qcur-0", {wq, op(2)}},
      {kReshape, "Qcur-0 (reshaped)", {op(3)}},
      {OpKind::kRope, "Qcur-0", {op(4), pos}},
      {OpKind::kMulMat, "Kcur-0", {wk, op(2)}},
      {kReshape, "Kcur-0 (reshaped)", {op(6)}},
      {OpKind::kRope, "Kcur-0", {op(7), pos}},
      {OpKind::kMulMat, "Vcur-0", {wv, op(2)}},
  };
  b.Token(ProbeKind::kTokenEnter, 0, 1, 1);
  int64_t t = 100;
  for (size_t i = 0; i < rows.size(); ++i) {
    for (ProbeKind k : {ProbeKind::kOpEnter, ProbeKind::kOpExit}) {
      RawEvent& e = b.Op(k, t, 1, op(static_cast<int>(i)), rows[i].type, rows[i].name);
      auto& p = std::get<OpPayload>(e.payload);
      p.dims = Dims{64, 1, 1, 1};
      p.src_addrs = rows[i].srcs;
      t += 50;
    }
  }
  b.Token(ProbeKind::kTokenExit, t + 100, 1, 1);
  return s;
}

}  // namespace profinfer::testing
