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

// Fixed-layout records submitted by the kernel-side probe handlers.
//
// Every record is exactly kRecordSize bytes, little-endian:
//
//   off  size  field
//   0    1     kind tag (ProbeKind value; 0xff = stream header record)
//   1    8     ts_ns
//   9    4     pid
//   13   4     tid
//   17   4     cpu
//   21   1     flags (kFlagReadError | kFlagNameTruncated)
//   22   ...   kind-specific payload, zero-filled to the end
//
// Op payload (relative to offset 22):
//   0    8     op_addr
//   8    4     op_type (raw runtime op enum value)
//   12   1     backend
//   13   1     pmc count
//   14   1     expert id count
//   15   1     reserved
//   16   64    op name, NUL-terminated (63 chars max)
//   80   32    dims, 4 x i64
//   112  80    src addresses, 10 x u64 (0 = no source)
//   192  64    pmc readings, 8 x u64
//   256  32    expert ids, 8 x u32
// Graph payload: 16 ASCII hex digits of the backend guid.
// Token payload: u32 batch size.
// Sched payload: u32 prev_tid, u32 next_tid, u32 wakee_tid, u32 reserved,
//                i64 prev_state.
// Header record payload: "PIWR", u8 version, u8 probe flags
//                (bit0 str, bit1 pmc, bit2 perf_buffer), u8 pmc count,
//                u8 reserved, u32 record size.

#ifndef PROFINFER_WIRE_FORMAT_H_
#define PROFINFER_WIRE_FORMAT_H_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "profinfer/event_model.h"

namespace profinfer::wire {

inline constexpr size_t kCommonSize = 22;
inline constexpr size_t kOpPayloadSize = 288;
inline constexpr size_t kRecordSize = kCommonSize + kOpPayloadSize;

inline constexpr uint8_t kHeaderTag = 0xff;
inline constexpr uint8_t kWireVersion = 1;
inline constexpr std::string_view kHeaderMagic = "PIWR";

enum RecordFlags : uint8_t {
  kFlagReadError = 1 << 0,
  kFlagNameTruncated = 1 << 1,
};

struct OpRecord {
  Addr op_addr = 0;
  uint32_t op_type = 0;
  uint8_t backend = 0;
  uint8_t n_pmc = 0;
  uint8_t n_experts = 0;
  std::string name;  // at most 63 bytes on the wire
  std::array<int64_t, 4> dims{};
  std::array<Addr, kMaxSrcs> srcs{};
  std::array<uint64_t, kMaxPmcs> pmc{};
  std::array<uint32_t, kMaxExperts> experts{};
  bool operator==(const OpRecord&) const = default;
};

struct SchedRecord {
  uint32_t prev_tid = 0;
  uint32_t next_tid = 0;
  uint32_t wakee_tid = 0;
  int64_t prev_state = 0;
  bool operator==(const SchedRecord&) const = default;
};

struct WireRecord {
  ProbeKind kind = ProbeKind::kOpEnter;
  uint64_t ts_ns = 0;
  uint32_t pid = 0;
  uint32_t tid = 0;
  uint32_t cpu = 0;
  uint8_t flags = 0;
  // Only the member matching |kind| is encoded; the rest is zero on the wire.
  OpRecord op;
  std::string guid;  // 16 hex digits
  uint32_t batch_size = 0;
  SchedRecord sched;
  bool operator==(const WireRecord&) const = default;
};

struct StreamHeader {
  uint8_t version = kWireVersion;
  ProbeFlags flags;
  uint8_t n_pmc = 0;
  uint32_t record_size = kRecordSize;
  bool operator==(const StreamHeader&) const = default;
};

// Encodes exactly kRecordSize bytes. A name longer than 63 bytes is cut and
// kFlagNameTruncated is set, mirroring the kernel-side bounded copy.
std::string EncodeRecord(const WireRecord& record);
std::string EncodeHeader(const StreamHeader& header);

bool IsHeaderRecord(std::string_view bytes);
// |offset| is the record's position in the enclosing stream, used in errors.
WireRecord DecodeRecord(std::string_view bytes, size_t offset = 0);
StreamHeader DecodeHeader(std::string_view bytes, size_t offset = 0);

// Raw op enum of the probed runtime build. Values outside the table map to
// OpType::Unknown(raw).
struct GgmlOpTable {
  std::vector<std::pair<uint32_t, OpKind>> entries;

  static GgmlOpTable Default();
  OpType ToOpType(uint32_t raw) const;
  // Inverse mapping; Unknown(raw) encodes as raw.
  uint32_t ToRaw(const OpType& type) const;
};

}  // namespace profinfer::wire

#endif  // PROFINFER_WIRE_FORMAT_H_
