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

#ifndef PROFINFER_EVENT_MODEL_H_
#define PROFINFER_EVENT_MODEL_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace profinfer {

// Thread and process ids as reported by bpf_get_current_pid_tgid().
using Tid = int32_t;
using Pid = int32_t;

// Opaque identity of a tensor in the traced process. Only equality and
// ordering (for use as a map key) are meaningful.
using Addr = uint64_t;

inline constexpr size_t kMaxOpNameLen = 63;
inline constexpr size_t kMaxSrcs = 10;
inline constexpr size_t kMaxPmcs = 8;
inline constexpr size_t kMaxExperts = 8;
inline constexpr int kFormatVersion = 1;

enum class ProbeKind : uint8_t {
  kTokenEnter = 0,
  kTokenExit = 1,
  kGraphEnter = 2,
  kGraphExit = 3,
  kOpEnter = 4,
  kOpExit = 5,
  kSchedSwitch = 6,
  kSchedWakeup = 7,
};

const char* ProbeKindName(ProbeKind kind);
std::optional<ProbeKind> ParseProbeKind(std::string_view name);

inline bool IsTokenKind(ProbeKind k) {
  return k == ProbeKind::kTokenEnter || k == ProbeKind::kTokenExit;
}
inline bool IsGraphKind(ProbeKind k) {
  return k == ProbeKind::kGraphEnter || k == ProbeKind::kGraphExit;
}
inline bool IsOpKind(ProbeKind k) {
  return k == ProbeKind::kOpEnter || k == ProbeKind::kOpExit;
}
inline bool IsSchedKind(ProbeKind k) {
  return k == ProbeKind::kSchedSwitch || k == ProbeKind::kSchedWakeup;
}

enum class OpKind : uint8_t {
  kNone,
  kMulMat,
  kMulMatId,
  kAdd,
  kMul,
  kSoftMax,
  kRmsNorm,
  kUnary,
  kRope,
  kCpy,
  kGetRows,
  kUnknown,
};

// Operator tag. Known kinds carry no payload; anything else keeps the raw
// integer the runtime reported so newer traces still load.
class OpType {
 public:
  constexpr OpType() = default;
  constexpr OpType(OpKind kind) : kind_(kind) {}  // NOLINT: implicit by intent
  static constexpr OpType Unknown(int64_t raw) {
    OpType t(OpKind::kUnknown);
    t.raw_ = raw;
    return t;
  }

  constexpr OpKind kind() const { return kind_; }
  constexpr int64_t raw() const { return raw_; }
  constexpr bool is_unknown() const { return kind_ == OpKind::kUnknown; }

  // "MUL_MAT", "SOFT_MAX", ..., or "UNKNOWN(<raw>)".
  std::string Name() const;
  static std::optional<OpType> FromName(std::string_view name);

  friend constexpr bool operator==(const OpType& a, const OpType& b) {
    return a.kind_ == b.kind_ && (a.kind_ != OpKind::kUnknown || a.raw_ == b.raw_);
  }
  friend constexpr bool operator!=(const OpType& a, const OpType& b) { return !(a == b); }

 private:
  OpKind kind_ = OpKind::kNone;
  int64_t raw_ = 0;
};

enum class Backend : uint8_t { kCpu = 0, kOpenClGpu = 1, kNpu = 2 };

const char* BackendName(Backend backend);
std::optional<Backend> ParseBackend(std::string_view name);

using Dims = std::array<int64_t, 4>;

struct OpPayload {
  Addr op_addr = 0;
  OpType op_type;
  std::string op_name;
  Backend backend = Backend::kCpu;
  std::optional<Dims> dims;
  std::optional<std::vector<Addr>> src_addrs;
  std::optional<std::vector<uint64_t>> pmc;
  std::optional<std::vector<uint32_t>> expert_ids;

  bool operator==(const OpPayload&) const = default;
};

struct GraphPayload {
  std::string backend_guid;  // 16 lowercase hex digits
  bool operator==(const GraphPayload&) const = default;
};

struct TokenPayload {
  uint32_t batch_size = 1;
  bool operator==(const TokenPayload&) const = default;
};

// SchedSwitch populates prev_tid/next_tid/prev_state; SchedWakeup populates
// wakee_tid. The other fields stay empty.
struct SchedPayload {
  std::optional<Tid> prev_tid;
  std::optional<Tid> next_tid;
  std::optional<int64_t> prev_state;
  std::optional<Tid> wakee_tid;

  static SchedPayload Switch(Tid prev, Tid next, int64_t prev_state) {
    SchedPayload p;
    p.prev_tid = prev;
    p.next_tid = next;
    p.prev_state = prev_state;
    return p;
  }
  static SchedPayload Wakeup(Tid wakee) {
    SchedPayload p;
    p.wakee_tid = wakee;
    return p;
  }

  bool operator==(const SchedPayload&) const = default;
};

using Payload = std::variant<OpPayload, GraphPayload, TokenPayload, SchedPayload>;

struct RawEvent {
  ProbeKind kind = ProbeKind::kOpEnter;
  int64_t ts_ns = 0;
  Pid pid = 0;
  Tid tid = 0;
  uint32_t cpu = 0;
  uint64_t seq = 0;
  Payload payload;

  // Convenience accessors; they return nullptr if the payload variant does
  // not hold the requested alternative.
  const OpPayload* op() const { return std::get_if<OpPayload>(&payload); }
  const GraphPayload* graph() const { return std::get_if<GraphPayload>(&payload); }
  const TokenPayload* token() const { return std::get_if<TokenPayload>(&payload); }
  const SchedPayload* sched() const { return std::get_if<SchedPayload>(&payload); }

  bool operator==(const RawEvent&) const = default;
};

enum class PmcScope : uint8_t { kPerCore, kSoftware, kHardware };
enum class PmcUnitKind : uint8_t { kBytes, kPages, kCycles };

struct PmcUnit {
  PmcUnitKind kind = PmcUnitKind::kCycles;
  uint64_t multiplier = 1;  // bytes(n) -> n; pages and cycles are always 1
  bool operator==(const PmcUnit&) const = default;
};

struct PmcSpec {
  std::string name;
  PmcScope scope = PmcScope::kHardware;
  PmcUnit unit;
  bool operator==(const PmcSpec&) const = default;
};

inline constexpr std::string_view kPmcL3dCacheRefill = "l3d_cache_refill";
inline constexpr std::string_view kPmcMemAccessWr = "mem_access_wr";
inline constexpr std::string_view kPmcMajorFaults = "major-faults";
inline constexpr std::string_view kPmcCycles = "cycles";
inline constexpr std::string_view kPmcIdleBackendCycles = "idle-backend-cycles";

// The five counters with the units used to convert event counts into bytes,
// pages, or cycles: refills move 64 B, write accesses 16 B.
std::vector<PmcSpec> CanonicalPmcSpecs();
std::optional<PmcSpec> CanonicalPmcSpec(std::string_view name);

const char* PmcScopeName(PmcScope scope);
std::optional<PmcScope> ParsePmcScope(std::string_view name);
std::string PmcUnitText(const PmcUnit& unit);  // "bytes(64)", "pages(1)", ...
std::optional<PmcUnit> ParsePmcUnit(std::string_view text);

struct ProbeFlags {
  bool str = false;
  bool pmc = false;
  bool perf_buffer = false;
  bool operator==(const ProbeFlags&) const = default;
};

struct SessionHeader {
  ProbeFlags flags;
  std::vector<PmcSpec> pmc_specs;
  std::set<Tid> inference_tids;
  double qos_target_tps = 0.0;
  uint32_t nthreads = 1;
  std::map<std::string, std::string> backend_names;  // guid -> label
  // Number of experts per token for MoE sessions; 0 for dense models.
  uint32_t experts_per_token = 0;
  // Records reported lost by the perf-buffer transport.
  uint64_t lost_events = 0;

  bool operator==(const SessionHeader&) const = default;
};

struct TraceSession {
  SessionHeader header;
  std::vector<RawEvent> events;

  bool operator==(const TraceSession&) const = default;
};

enum class ThreadState : uint8_t { kUnknown, kRunning, kRunnable, kIdle };

const char* ThreadStateName(ThreadState state);
std::optional<ThreadState> ParseThreadState(std::string_view name);

struct Violation {
  uint64_t seq = 0;
  std::string message;
  bool operator==(const Violation&) const = default;
};

// Checks every type invariant. The result is sorted by (seq, message), so it
// does not depend on the order of |session.events| as long as the seq values
// are preserved.
std::vector<Violation> ValidateSession(const TraceSession& session);

bool IsLowerHexGuid(std::string_view guid);

}  // namespace profinfer

#endif  // PROFINFER_EVENT_MODEL_H_
