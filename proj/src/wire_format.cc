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

#include "profinfer/wire_format.h"

#include "byte_io.h"
#include "profinfer/error.h"

namespace profinfer::wire {

namespace {

constexpr size_t kNameBytes = 64;

[[noreturn]] void StreamFail(size_t offset, const std::string& msg) {
  throw Error(ErrorCode::kStream, msg + " at byte offset " + std::to_string(offset));
}

}  // namespace

std::string EncodeRecord(const WireRecord& r) {
  internal::ByteWriter w;
  w.Put(static_cast<uint8_t>(r.kind));
  w.Put(r.ts_ns);
  w.Put(r.pid);
  w.Put(r.tid);
  w.Put(r.cpu);
  uint8_t flags = r.flags;
  switch (r.kind) {
    case ProbeKind::kOpEnter:
    case ProbeKind::kOpExit: {
      const OpRecord& op = r.op;
      std::string name = op.name;
      if (name.size() > kMaxOpNameLen) {
        name.resize(kMaxOpNameLen);
        flags |= kFlagNameTruncated;
      }
      w.Put(flags);
      w.Put(op.op_addr);
      w.Put(op.op_type);
      w.Put(op.backend);
      w.Put(op.n_pmc);
      w.Put(op.n_experts);
      w.Put(uint8_t{0});
      w.PutBytes(name);
      w.PutZeros(kNameBytes - name.size());
      for (int64_t d : op.dims) w.Put(d);
      for (Addr a : op.srcs) w.Put(a);
      for (uint64_t v : op.pmc) w.Put(v);
      for (uint32_t e : op.experts) w.Put(e);
      break;
    }
    case ProbeKind::kGraphEnter:
    case ProbeKind::kGraphExit:
      w.Put(flags);
      w.PutBytes(std::string_view(r.guid).substr(0, 16));
      w.PutZeros(16 - std::min<size_t>(16, r.guid.size()));
      break;
    case ProbeKind::kTokenEnter:
    case ProbeKind::kTokenExit:
      w.Put(flags);
      w.Put(r.batch_size);
      break;
    case ProbeKind::kSchedSwitch:
    case ProbeKind::kSchedWakeup:
      w.Put(flags);
      w.Put(r.sched.prev_tid);
      w.Put(r.sched.next_tid);
      w.Put(r.sched.wakee_tid);
      w.Put(uint32_t{0});
      w.Put(r.sched.prev_state);
      break;
  }
  w.PutZeros(kRecordSize - w.size());
  return w.Take();
}

std::string EncodeHeader(const StreamHeader& h) {
  internal::ByteWriter w;
  w.Put(kHeaderTag);
  w.PutZeros(kCommonSize - 1);
  w.PutBytes(kHeaderMagic);
  w.Put(h.version);
  w.Put(static_cast<uint8_t>((h.flags.str ? 1 : 0) | (h.flags.pmc ? 2 : 0) |
                             (h.flags.perf_buffer ? 4 : 0)));
  w.Put(h.n_pmc);
  w.Put(uint8_t{0});
  w.Put(h.record_size);
  w.PutZeros(kRecordSize - w.size());
  return w.Take();
}

bool IsHeaderRecord(std::string_view bytes) {
  return !bytes.empty() && static_cast<uint8_t>(bytes[0]) == kHeaderTag;
}

WireRecord DecodeRecord(std::string_view bytes, size_t offset) {
  if (bytes.size() != kRecordSize) {
    StreamFail(offset, "malformed record length " + std::to_string(bytes.size()) +
                           " (expected " + std::to_string(kRecordSize) + ")");
  }
  internal::ByteReader rd(bytes, offset);
  WireRecord r;
  uint8_t tag = rd.Get<uint8_t>();
  if (tag > static_cast<uint8_t>(ProbeKind::kSchedWakeup)) {
    StreamFail(offset, "unknown record kind " + std::to_string(tag));
  }
  r.kind = static_cast<ProbeKind>(tag);
  r.ts_ns = rd.Get<uint64_t>();
  r.pid = rd.Get<uint32_t>();
  r.tid = rd.Get<uint32_t>();
  r.cpu = rd.Get<uint32_t>();
  r.flags = rd.Get<uint8_t>();
  if (IsOpKind(r.kind)) {
    OpRecord& op = r.op;
    op.op_addr = rd.Get<Addr>();
    op.op_type = rd.Get<uint32_t>();
    op.backend = rd.Get<uint8_t>();
    op.n_pmc = rd.Get<uint8_t>();
    op.n_experts = rd.Get<uint8_t>();
    rd.Get<uint8_t>();
    std::string_view name = rd.GetBytes(kNameBytes);
    op.name = std::string(name.substr(0, name.find('\0')));
    for (auto& d : op.dims) d = rd.Get<int64_t>();
    for (auto& a : op.srcs) a = rd.Get<Addr>();
    for (auto& v : op.pmc) v = rd.Get<uint64_t>();
    for (auto& e : op.experts) e = rd.Get<uint32_t>();
    if (op.n_pmc > kMaxPmcs) StreamFail(offset, "pmc count out of range");
    if (op.n_experts > kMaxExperts) StreamFail(offset, "expert count out of range");
  } else if (IsGraphKind(r.kind)) {
    std::string_view guid = rd.GetBytes(16);
    r.guid = std::string(guid.substr(0, guid.find('\0')));
  } else if (IsTokenKind(r.kind)) {
    r.batch_size = rd.Get<uint32_t>();
  } else {
    r.sched.prev_tid = rd.Get<uint32_t>();
    r.sched.next_tid = rd.Get<uint32_t>();
    r.sched.wakee_tid = rd.Get<uint32_t>();
    rd.Get<uint32_t>();
    r.sched.prev_state = rd.Get<int64_t>();
  }
  return r;
}

StreamHeader DecodeHeader(std::string_view bytes, size_t offset) {
  if (bytes.size() != kRecordSize) {
    StreamFail(offset, "malformed header record length " + std::to_string(bytes.size()));
  }
  if (!IsHeaderRecord(bytes)) StreamFail(offset, "expected stream header record");
  internal::ByteReader rd(bytes.substr(kCommonSize), offset + kCommonSize);
  if (rd.GetBytes(kHeaderMagic.size()) != kHeaderMagic) StreamFail(offset, "bad header magic");
  StreamHeader h;
  h.version = rd.Get<uint8_t>();
  if (h.version != kWireVersion) {
    StreamFail(offset, "unsupported wire version " + std::to_string(h.version));
  }
  uint8_t flags = rd.Get<uint8_t>();
  h.flags = {(flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0};
  h.n_pmc = rd.Get<uint8_t>();
  rd.Get<uint8_t>();
  h.record_size = rd.Get<uint32_t>();
  if (h.record_size != kRecordSize) {
    StreamFail(offset, "record size " + std::to_string(h.record_size) + " not supported");
  }
  return h;
}

GgmlOpTable GgmlOpTable::Default() {
  // Op numbering of the GGML release the default probe offsets target.
  return {{
      {0, OpKind::kNone},
      {2, OpKind::kAdd},
      {7, OpKind::kMul},
      {24, OpKind::kRmsNorm},
      {28, OpKind::kMulMat},
      {29, OpKind::kMulMatId},
      {33, OpKind::kCpy},
      {39, OpKind::kGetRows},
      {45, OpKind::kSoftMax},
      {47, OpKind::kRope},
      {80, OpKind::kUnary},
  }};
}

OpType GgmlOpTable::ToOpType(uint32_t raw) const {
  for (const auto& [code, kind] : entries) {
    if (code == raw) return OpType(kind);
  }
  return OpType::Unknown(raw);
}

uint32_t GgmlOpTable::ToRaw(const OpType& type) const {
  if (type.is_unknown()) return static_cast<uint32_t>(type.raw());
  for (const auto& [code, kind] : entries) {
    if (kind == type.kind()) return code;
  }
  throw Error(ErrorCode::kDomain, "op type " + type.Name() + " has no code in the op table");
}

}  // namespace profinfer::wire
