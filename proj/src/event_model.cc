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

#include "profinfer/event_model.h"

#include <algorithm>
#include <charconv>
#include <unordered_set>

#include "profinfer/error.h"

namespace profinfer {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kDomain: return "DomainError";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kStream: return "StreamError";
    case ErrorCode::kUnbalancedProbe: return "UnbalancedProbe";
    case ErrorCode::kStructural: return "StructuralError";
    case ErrorCode::kDagUnavailable: return "DagUnavailable";
    case ErrorCode::kUnknownIteration: return "UnknownIteration";
    case ErrorCode::kMetricUnavailable: return "MetricUnavailable";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kUnsupported: return "Unsupported";
  }
  return "Error";
}

namespace {

constexpr std::pair<ProbeKind, std::string_view> kProbeKindNames[] = {
    {ProbeKind::kTokenEnter, "TokenEnter"},   {ProbeKind::kTokenExit, "TokenExit"},
    {ProbeKind::kGraphEnter, "GraphEnter"},   {ProbeKind::kGraphExit, "GraphExit"},
    {ProbeKind::kOpEnter, "OpEnter"},         {ProbeKind::kOpExit, "OpExit"},
    {ProbeKind::kSchedSwitch, "SchedSwitch"}, {ProbeKind::kSchedWakeup, "SchedWakeup"},
};

constexpr std::pair<OpKind, std::string_view> kOpKindNames[] = {
    {OpKind::kNone, "NONE"},         {OpKind::kMulMat, "MUL_MAT"},
    {OpKind::kMulMatId, "MUL_MAT_ID"}, {OpKind::kAdd, "ADD"},
    {OpKind::kMul, "MUL"},           {OpKind::kSoftMax, "SOFT_MAX"},
    {OpKind::kRmsNorm, "RMS_NORM"},  {OpKind::kUnary, "UNARY"},
    {OpKind::kRope, "ROPE"},         {OpKind::kCpy, "CPY"},
    {OpKind::kGetRows, "GET_ROWS"},
};

constexpr std::pair<Backend, std::string_view> kBackendNames[] = {
    {Backend::kCpu, "CPU"},
    {Backend::kOpenClGpu, "OpenCL-GPU"},
    {Backend::kNpu, "NPU"},
};

constexpr std::pair<PmcScope, std::string_view> kPmcScopeNames[] = {
    {PmcScope::kPerCore, "per-core"},
    {PmcScope::kSoftware, "software"},
    {PmcScope::kHardware, "hardware"},
};

constexpr std::pair<ThreadState, std::string_view> kThreadStateNames[] = {
    {ThreadState::kUnknown, "Unknown"},
    {ThreadState::kRunning, "Running"},
    {ThreadState::kRunnable, "Runnable"},
    {ThreadState::kIdle, "Idle"},
};

template <typename E, size_t N>
const char* LookupName(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [k, name] : table) {
    if (k == value) return name.data();
  }
  return "?";
}

template <typename E, size_t N>
std::optional<E> LookupValue(const std::pair<E, std::string_view> (&table)[N],
                             std::string_view name) {
  for (const auto& [k, n] : table) {
    if (n == name) return k;
  }
  return std::nullopt;
}

}  // namespace

const char* ProbeKindName(ProbeKind kind) { return LookupName(kProbeKindNames, kind); }
std::optional<ProbeKind> ParseProbeKind(std::string_view name) {
  return LookupValue(kProbeKindNames, name);
}

std::string OpType::Name() const {
  if (kind_ == OpKind::kUnknown) return "UNKNOWN(" + std::to_string(raw_) + ")";
  return LookupName(kOpKindNames, kind_);
}

std::optional<OpType> OpType::FromName(std::string_view name) {
  if (auto kind = LookupValue(kOpKindNames, name)) return OpType(*kind);
  constexpr std::string_view kPrefix = "UNKNOWN(";
  if (name.size() > kPrefix.size() + 1 && name.substr(0, kPrefix.size()) == kPrefix &&
      name.back() == ')') {
    std::string_view digits = name.substr(kPrefix.size(), name.size() - kPrefix.size() - 1);
    int64_t raw = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), raw);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) return Unknown(raw);
  }
  return std::nullopt;
}

const char* BackendName(Backend backend) { return LookupName(kBackendNames, backend); }
std::optional<Backend> ParseBackend(std::string_view name) {
  return LookupValue(kBackendNames, name);
}

const char* PmcScopeName(PmcScope scope) { return LookupName(kPmcScopeNames, scope); }
std::optional<PmcScope> ParsePmcScope(std::string_view name) {
  return LookupValue(kPmcScopeNames, name);
}

const char* ThreadStateName(ThreadState state) {
  return LookupName(kThreadStateNames, state);
}
std::optional<ThreadState> ParseThreadState(std::string_view name) {
  return LookupValue(kThreadStateNames, name);
}

std::string PmcUnitText(const PmcUnit& unit) {
  const char* base = unit.kind == PmcUnitKind::kBytes   ? "bytes"
                     : unit.kind == PmcUnitKind::kPages ? "pages"
                                                        : "cycles";
  return std::string(base) + "(" + std::to_string(unit.multiplier) + ")";
}

std::optional<PmcUnit> ParsePmcUnit(std::string_view text) {
  auto open = text.find('(');
  if (open == std::string_view::npos || text.empty() || text.back() != ')') return std::nullopt;
  std::string_view base = text.substr(0, open);
  std::string_view digits = text.substr(open + 1, text.size() - open - 2);
  PmcUnit unit;
  if (base == "bytes") {
    unit.kind = PmcUnitKind::kBytes;
  } else if (base == "pages") {
    unit.kind = PmcUnitKind::kPages;
  } else if (base == "cycles") {
    unit.kind = PmcUnitKind::kCycles;
  } else {
    return std::nullopt;
  }
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), unit.multiplier);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || unit.multiplier == 0) {
    return std::nullopt;
  }
  return unit;
}

std::vector<PmcSpec> CanonicalPmcSpecs() {
  return {
      {std::string(kPmcL3dCacheRefill), PmcScope::kPerCore, {PmcUnitKind::kBytes, 64}},
      {std::string(kPmcMemAccessWr), PmcScope::kPerCore, {PmcUnitKind::kBytes, 16}},
      {std::string(kPmcMajorFaults), PmcScope::kSoftware, {PmcUnitKind::kPages, 1}},
      {std::string(kPmcCycles), PmcScope::kHardware, {PmcUnitKind::kCycles, 1}},
      {std::string(kPmcIdleBackendCycles), PmcScope::kHardware, {PmcUnitKind::kCycles, 1}},
  };
}

std::optional<PmcSpec> CanonicalPmcSpec(std::string_view name) {
  for (auto& spec : CanonicalPmcSpecs()) {
    if (spec.name == name) return spec;
  }
  return std::nullopt;
}

bool IsLowerHexGuid(std::string_view guid) {
  if (guid.size() != 16) return false;
  return std::all_of(guid.begin(), guid.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

namespace {

class Validator {
 public:
  explicit Validator(const SessionHeader& header) : header_(header) {}

  void Check(const RawEvent& ev) {
    if (ev.ts_ns < 0) Add(ev, "negative ts_ns " + std::to_string(ev.ts_ns));
    if (!seen_seqs_.insert(ev.seq).second) Add(ev, "duplicate seq");

    if (IsOpKind(ev.kind) || IsGraphKind(ev.kind) || IsTokenKind(ev.kind)) {
      if (!header_.inference_tids.count(ev.tid)) {
        Add(ev, std::string(ProbeKindName(ev.kind)) + " from tid " + std::to_string(ev.tid) +
                    " outside inference_tids");
      }
    }

    if (IsOpKind(ev.kind)) {
      if (const auto* op = ev.op()) {
        CheckOp(ev, *op);
      } else {
        Add(ev, "payload does not match kind " + std::string(ProbeKindName(ev.kind)));
      }
    } else if (IsGraphKind(ev.kind)) {
      if (const auto* g = ev.graph()) {
        if (!IsLowerHexGuid(g->backend_guid)) {
          Add(ev, "backend_guid '" + g->backend_guid + "' is not 16 lowercase hex digits");
        }
      } else {
        Add(ev, "payload does not match kind " + std::string(ProbeKindName(ev.kind)));
      }
    } else if (IsTokenKind(ev.kind)) {
      if (const auto* t = ev.token()) {
        if (t->batch_size < 1) Add(ev, "batch_size must be >= 1");
      } else {
        Add(ev, "payload does not match kind " + std::string(ProbeKindName(ev.kind)));
      }
    } else {
      if (const auto* s = ev.sched()) {
        CheckSched(ev, *s);
      } else {
        Add(ev, "payload does not match kind " + std::string(ProbeKindName(ev.kind)));
      }
    }
  }

  std::vector<Violation> Take() {
    std::sort(out_.begin(), out_.end(), [](const Violation& a, const Violation& b) {
      return std::tie(a.seq, a.message) < std::tie(b.seq, b.message);
    });
    return std::move(out_);
  }

 private:
  void Add(const RawEvent& ev, std::string message) {
    out_.push_back({ev.seq, "seq " + std::to_string(ev.seq) + ": " + std::move(message)});
  }

  void CheckOp(const RawEvent& ev, const OpPayload& op) {
    if (op.op_name.size() > kMaxOpNameLen) {
      Add(ev, "op_name longer than " + std::to_string(kMaxOpNameLen) + " chars");
    }
    if (!header_.flags.str) {
      if (op.dims) Add(ev, "dims present while str flag is off");
      if (op.src_addrs) Add(ev, "src_addrs present while str flag is off");
    }
    if (op.src_addrs && op.src_addrs->size() > kMaxSrcs) {
      Add(ev, "more than " + std::to_string(kMaxSrcs) + " src_addrs");
    }
    if (op.pmc) {
      if (!header_.flags.pmc) Add(ev, "pmc readings present while pmc flag is off");
      if (op.backend != Backend::kCpu) {
        Add(ev, std::string("pmc readings on non-CPU backend ") + BackendName(op.backend));
      }
      if (op.pmc->size() != header_.pmc_specs.size()) {
        Add(ev, "pmc length " + std::to_string(op.pmc->size()) + " != pmc_specs length " +
                    std::to_string(header_.pmc_specs.size()));
      }
    }
    if (op.expert_ids) {
      if (op.op_type.kind() != OpKind::kMulMatId) {
        Add(ev, "expert_ids on non-MUL_MAT_ID op " + op.op_type.Name());
      }
      if (op.expert_ids->size() != header_.experts_per_token) {
        Add(ev, "expert_ids length " + std::to_string(op.expert_ids->size()) +
                    " != experts_per_token " + std::to_string(header_.experts_per_token));
      }
    }
  }

  void CheckSched(const RawEvent& ev, const SchedPayload& s) {
    if (ev.kind == ProbeKind::kSchedSwitch) {
      if (!s.prev_tid || !s.next_tid || !s.prev_state || s.wakee_tid) {
        Add(ev, "SchedSwitch must carry exactly prev_tid, next_tid, prev_state");
      }
    } else if (!s.wakee_tid || s.prev_tid || s.next_tid || s.prev_state) {
      Add(ev, "SchedWakeup must carry exactly wakee_tid");
    }
  }

  const SessionHeader& header_;
  std::unordered_set<uint64_t> seen_seqs_;
  std::vector<Violation> out_;
};

}  // namespace

std::vector<Violation> ValidateSession(const TraceSession& session) {
  // Visit in seq order so "duplicate seq" lands on the same event no matter
  // how the list was permuted.
  std::vector<const RawEvent*> order;
  order.reserve(session.events.size());
  for (const auto& ev : session.events) order.push_back(&ev);
  std::stable_sort(order.begin(), order.end(),
                   [](const RawEvent* a, const RawEvent* b) { return a->seq < b->seq; });
  Validator v(session.header);
  for (const RawEvent* ev : order) v.Check(*ev);
  return v.Take();
}

}  // namespace profinfer
