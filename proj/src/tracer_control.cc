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

#include "profinfer/tracer_control.h"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "byte_io.h"
#include "profinfer/error.h"

namespace profinfer {

namespace {

constexpr std::pair<TraceLevel, std::string_view> kTraceLevelNames[] = {
    {TraceLevel::kToken, "token"},
    {TraceLevel::kGraph, "graph"},
    {TraceLevel::kOp, "op"},
    {TraceLevel::kKernel, "kernel"},
};

bool LevelRequested(PlanLevel level, const std::set<TraceLevel>& levels) {
  switch (level) {
    case PlanLevel::kToken:
      return levels.count(TraceLevel::kToken) > 0;
    case PlanLevel::kGraph:
      return levels.count(TraceLevel::kGraph) > 0;
    case PlanLevel::kOpCpu:
    case PlanLevel::kOpGpu:
    case PlanLevel::kOpNpu:
      return levels.count(TraceLevel::kOp) > 0;
    case PlanLevel::kKernel:
      return levels.count(TraceLevel::kKernel) > 0;
  }
  return false;
}

std::pair<ProbeKind, ProbeKind> KindsFor(PlanLevel level) {
  switch (level) {
    case PlanLevel::kToken:
      return {ProbeKind::kTokenEnter, ProbeKind::kTokenExit};
    case PlanLevel::kGraph:
      return {ProbeKind::kGraphEnter, ProbeKind::kGraphExit};
    default:
      return {ProbeKind::kOpEnter, ProbeKind::kOpExit};
  }
}

}  // namespace

const char* TraceLevelName(TraceLevel level) {
  for (const auto& [l, name] : kTraceLevelNames) {
    if (l == level) return name.data();
  }
  return "?";
}

std::optional<TraceLevel> ParseTraceLevel(std::string_view name) {
  for (const auto& [l, n] : kTraceLevelNames) {
    if (n == name) return l;
  }
  return std::nullopt;
}

const char* PlanLevelName(PlanLevel level) {
  switch (level) {
    case PlanLevel::kToken: return "token";
    case PlanLevel::kGraph: return "graph";
    case PlanLevel::kOpCpu: return "op-cpu";
    case PlanLevel::kOpGpu: return "op-gpu";
    case PlanLevel::kOpNpu: return "op-npu";
    case PlanLevel::kKernel: return "kernel";
  }
  return "?";
}

const char* AttachTypeName(AttachType type) {
  switch (type) {
    case AttachType::kFunctionEntry: return "function-entry";
    case AttachType::kFunctionReturn: return "function-return";
    case AttachType::kKernelTracepoint: return "kernel-tracepoint";
  }
  return "?";
}

const std::vector<ProbeTarget>& DefaultProbeTargets() {
  static const auto* targets = new std::vector<ProbeTarget>{
      {"llama_decode", "libllama.so", PlanLevel::kToken, false},
      {"ggml_backend_graph_compute_async", "libggml-base.so", PlanLevel::kGraph, false},
      {"ggml_compute_forward", "libggml-cpu.so", PlanLevel::kOpCpu, false},
      {"ggml_cl_compute_forward", "libggml-opencl.so", PlanLevel::kOpGpu, false},
      {"ggml_rk_compute_forward", "libggml-rknpu.so", PlanLevel::kOpNpu, false},
      {"sched:sched_switch", "", PlanLevel::kKernel, true},
      {"sched:sched_wakeup", "", PlanLevel::kKernel, true},
  };
  return *targets;
}

ProbePlan BuildProbePlan(const ProbeFlags& flags, const std::set<TraceLevel>& levels) {
  return BuildProbePlan(flags, levels, {});
}

ProbePlan BuildProbePlan(const ProbeFlags& flags, const std::set<TraceLevel>& levels,
                         const std::map<std::string, std::string>& library_overrides) {
  if (levels.empty()) {
    throw Error(ErrorCode::kConfig, "no trace levels requested; nothing to attach");
  }
  ProbePlan plan;
  plan.flags = flags;
  for (const ProbeTarget& t : DefaultProbeTargets()) {
    if (!LevelRequested(t.level, levels)) continue;
    if (t.is_tracepoint) {
      ProbeKind kind = t.symbol == "sched:sched_switch" ? ProbeKind::kSchedSwitch
                                                         : ProbeKind::kSchedWakeup;
      plan.entries.push_back({t.symbol, "", AttachType::kKernelTracepoint, kind, t.level});
      continue;
    }
    std::string library = t.library;
    if (auto it = library_overrides.find(t.symbol); it != library_overrides.end()) {
      library = it->second;
    }
    auto [enter, exit] = KindsFor(t.level);
    plan.entries.push_back({t.symbol, library, AttachType::kFunctionEntry, enter, t.level});
    plan.entries.push_back({t.symbol, library, AttachType::kFunctionReturn, exit, t.level});
  }
  return plan;
}

// ---------------------------------------------------------------------------

const char* ProbeClassName(ProbeClass c) {
  switch (c) {
    case ProbeClass::kToken: return "token";
    case ProbeClass::kGraph: return "graph";
    case ProbeClass::kOp: return "op";
    case ProbeClass::kStr: return "str";
    case ProbeClass::kPmc: return "pmc";
  }
  return "?";
}

ProbeMask ProbeMask::All() {
  ProbeMask m;
  m.bits_.set();
  return m;
}

ProbeMask ProbeMask::None() { return ProbeMask(); }

ProbeMask ProbeMask::FromFlags(const ProbeFlags& flags) {
  ProbeMask m;
  m.Set(ProbeClass::kToken, true);
  m.Set(ProbeClass::kGraph, true);
  m.Set(ProbeClass::kOp, true);
  m.Set(ProbeClass::kStr, flags.str);
  m.Set(ProbeClass::kPmc, flags.pmc);
  return m;
}

std::string ProbeMask::ToString() const {
  std::string out;
  for (size_t i = 0; i < kNumProbeClasses; ++i) {
    if (!bits_.test(i)) continue;
    if (!out.empty()) out += ",";
    out += ProbeClassName(static_cast<ProbeClass>(i));
  }
  return out.empty() ? "-" : out;
}

std::array<uint8_t, kNumProbeClasses> ControlMapImage(const ProbeMask& mask) {
  std::array<uint8_t, kNumProbeClasses> image{};
  for (size_t i = 0; i < kNumProbeClasses; ++i) {
    image[i] = mask.Has(static_cast<ProbeClass>(i)) ? 1 : 0;
  }
  return image;
}

QosDecision QosUpdate(const QosController& controller, std::span<const int64_t> recent_tpot_ns) {
  QosDecision d;
  d.mask = controller.mask;
  d.mask.Set(ProbeClass::kToken, true);
  if (recent_tpot_ns.empty()) return d;
  size_t n = recent_tpot_ns.size();
  if (controller.window > 0 && n > controller.window) {
    recent_tpot_ns = recent_tpot_ns.subspan(n - controller.window);
    n = controller.window;
  }
  long double sum = 0;
  for (int64_t t : recent_tpot_ns) sum += static_cast<long double>(t);
  long double mean = sum / static_cast<long double>(n);
  // A zero mean means the tokens are arbitrarily fast.
  double tps = mean > 0 ? static_cast<double>(1e9L / mean) : std::numeric_limits<double>::infinity();

  if (tps < controller.target_tps) {
    for (ProbeClass c : kShedOrder) {
      if (d.mask.Has(c)) {
        d.mask.Set(c, false);
        d.disabled.push_back(c);
        break;
      }
    }
  } else if (tps > controller.target_tps * (1.0 + controller.hysteresis_margin)) {
    for (auto it = kShedOrder.rbegin(); it != kShedOrder.rend(); ++it) {
      if (!d.mask.Has(*it) && controller.allowed.Has(*it)) {
        d.mask.Set(*it, true);
        d.enabled.push_back(*it);
        break;
      }
    }
  }
  return d;
}

double ProbeOverhead(std::span<const int64_t> probe_costs_ns, int64_t runtime_ns,
                     uint32_t nthreads) {
  if (runtime_ns <= 0) {
    throw Error(ErrorCode::kDomain, "probe overhead needs a positive runtime");
  }
  if (nthreads == 0) {
    throw Error(ErrorCode::kDomain, "probe overhead needs at least one thread");
  }
  long double sum = 0;
  for (int64_t c : probe_costs_ns) sum += static_cast<long double>(c);
  return static_cast<double>(sum / (static_cast<long double>(runtime_ns) * nthreads));
}

// ---------------------------------------------------------------------------

std::optional<WireSample> RecordedWireSource::Next() {
  if (pos_ == bytes_.size()) return std::nullopt;
  internal::ByteReader rd(bytes_.substr(pos_), pos_);
  WireSample s;
  s.offset = pos_;
  uint32_t len = rd.Get<uint32_t>();
  if (len == kLostMarker) {
    s.type = WireSample::Type::kLost;
    s.lost = rd.Get<uint64_t>();
  } else {
    s.bytes = rd.GetBytes(len);
    s.offset = pos_ + sizeof(uint32_t);
  }
  pos_ += rd.pos();
  return s;
}

void RecordedWireWriter::AddRecord(std::string_view record_bytes) {
  internal::ByteWriter w;
  w.Put(static_cast<uint32_t>(record_bytes.size()));
  w.PutBytes(record_bytes);
  out_ += w.Take();
}

void RecordedWireWriter::AddLost(uint64_t count) {
  internal::ByteWriter w;
  w.Put(kLostMarker);
  w.Put(count);
  out_ += w.Take();
}

// ---------------------------------------------------------------------------

SessionSink::SessionSink(TraceSession* session, wire::GgmlOpTable op_table)
    : session_(session), op_table_(std::move(op_table)) {
  for (const RawEvent& e : session_->events) next_seq_ = std::max(next_seq_, e.seq + 1);
}

void SessionSink::EnableQos(QosController controller,
                            std::function<void(const QosDecision&)> on_change) {
  qos_ = std::move(controller);
  on_qos_change_ = std::move(on_change);
}

void SessionSink::ApplyHeader(const wire::StreamHeader& header) {
  SessionHeader& h = session_->header;
  h.flags = header.flags;
  if (!header.flags.pmc) {
    h.pmc_specs.clear();
    return;
  }
  if (h.pmc_specs.empty()) {
    std::vector<PmcSpec> canonical = CanonicalPmcSpecs();
    if (header.n_pmc > canonical.size()) {
      throw Error(ErrorCode::kStream, "stream carries " + std::to_string(header.n_pmc) +
                                          " counters but no counter list was configured");
    }
    canonical.resize(header.n_pmc);
    h.pmc_specs = std::move(canonical);
  } else if (h.pmc_specs.size() != header.n_pmc) {
    throw Error(ErrorCode::kStream, "stream carries " + std::to_string(header.n_pmc) +
                                        " counters, session expects " +
                                        std::to_string(h.pmc_specs.size()));
  }
}

void SessionSink::ReportLost(uint64_t count) {
  session_->header.lost_events += count;
  next_seq_ += count;
}

void SessionSink::Append(const wire::WireRecord& record) {
  ProbeFlags enabled = session_->header.flags;
  if (qos_) {
    enabled.str = enabled.str && qos_->mask.Has(ProbeClass::kStr);
    enabled.pmc = enabled.pmc && qos_->mask.Has(ProbeClass::kPmc);
  }
  RawEvent ev = DecodeWireRecordToEvent(record, enabled, op_table_, next_seq_++);
  if (ev.kind == ProbeKind::kTokenEnter) {
    pending_token_enter_ts_ = ev.ts_ns;
    pending_token_batch_ = ev.token()->batch_size;
  }
  session_->events.push_back(std::move(ev));
  if (record.kind == ProbeKind::kTokenExit) FeedQos(session_->events.back());
}

void SessionSink::FeedQos(const RawEvent& exit_event) {
  if (!pending_token_enter_ts_) return;
  int64_t tpot = exit_event.ts_ns - *pending_token_enter_ts_;
  bool decode = pending_token_batch_ == 1;
  pending_token_enter_ts_.reset();
  // Only decode iterations measure TPOT.
  if (!qos_ || !decode) return;
  tpot_history_.push_back(tpot);
  if (qos_->window > 0 && tpot_history_.size() > qos_->window) {
    tpot_history_.erase(tpot_history_.begin(),
                        tpot_history_.end() - static_cast<ptrdiff_t>(qos_->window));
  }
  QosDecision d = QosUpdate(*qos_, tpot_history_);
  if (d.mask == qos_->mask) return;
  qos_->mask = d.mask;
  if (on_qos_change_) on_qos_change_(d);
}

RawEvent DecodeWireRecordToEvent(const wire::WireRecord& r, const ProbeFlags& enabled,
                                 const wire::GgmlOpTable& op_table, uint64_t seq) {
  RawEvent ev;
  ev.kind = r.kind;
  ev.ts_ns = static_cast<int64_t>(r.ts_ns);
  ev.pid = static_cast<Pid>(r.pid);
  ev.tid = static_cast<Tid>(r.tid);
  ev.cpu = r.cpu;
  ev.seq = seq;
  bool read_error = (r.flags & wire::kFlagReadError) != 0;
  if (IsOpKind(r.kind)) {
    OpPayload op;
    op.op_addr = r.op.op_addr;
    op.op_type = op_table.ToOpType(r.op.op_type);
    op.op_name = r.op.name;
    if (r.op.backend > static_cast<uint8_t>(Backend::kNpu)) {
      throw Error(ErrorCode::kStream, "unknown backend tag " + std::to_string(r.op.backend));
    }
    op.backend = static_cast<Backend>(r.op.backend);
    if (enabled.str && !read_error) {
      op.dims = r.op.dims;
      std::vector<Addr> srcs;
      for (Addr a : r.op.srcs) {
        if (a != 0) srcs.push_back(a);
      }
      op.src_addrs = std::move(srcs);
    }
    if (enabled.pmc && op.backend == Backend::kCpu && r.op.n_pmc > 0) {
      op.pmc = std::vector<uint64_t>(r.op.pmc.begin(), r.op.pmc.begin() + r.op.n_pmc);
    }
    if (r.op.n_experts > 0 && !read_error) {
      op.expert_ids =
          std::vector<uint32_t>(r.op.experts.begin(), r.op.experts.begin() + r.op.n_experts);
    }
    ev.payload = std::move(op);
  } else if (IsGraphKind(r.kind)) {
    ev.payload = GraphPayload{r.guid};
  } else if (IsTokenKind(r.kind)) {
    ev.payload = TokenPayload{r.batch_size};
  } else if (r.kind == ProbeKind::kSchedSwitch) {
    ev.payload = SchedPayload::Switch(static_cast<Tid>(r.sched.prev_tid),
                                      static_cast<Tid>(r.sched.next_tid), r.sched.prev_state);
  } else {
    ev.payload = SchedPayload::Wakeup(static_cast<Tid>(r.sched.wakee_tid));
  }
  return ev;
}

wire::WireRecord EventToWireRecord(const RawEvent& e, const wire::GgmlOpTable& op_table) {
  if (e.ts_ns < 0) throw Error(ErrorCode::kDomain, "negative timestamp");
  wire::WireRecord r;
  r.kind = e.kind;
  r.ts_ns = static_cast<uint64_t>(e.ts_ns);
  r.pid = static_cast<uint32_t>(e.pid);
  r.tid = static_cast<uint32_t>(e.tid);
  r.cpu = e.cpu;
  if (const OpPayload* op = e.op()) {
    r.op.op_addr = op->op_addr;
    r.op.op_type = op_table.ToRaw(op->op_type);
    r.op.backend = static_cast<uint8_t>(op->backend);
    r.op.name = op->op_name;
    if (op->dims) r.op.dims = *op->dims;
    if (op->src_addrs) {
      if (op->src_addrs->size() > kMaxSrcs) {
        throw Error(ErrorCode::kDomain, "more than 10 sources at seq " + std::to_string(e.seq));
      }
      std::copy(op->src_addrs->begin(), op->src_addrs->end(), r.op.srcs.begin());
    }
    if (op->pmc) {
      if (op->pmc->size() > kMaxPmcs) {
        throw Error(ErrorCode::kDomain, "more than 8 counters at seq " + std::to_string(e.seq));
      }
      r.op.n_pmc = static_cast<uint8_t>(op->pmc->size());
      std::copy(op->pmc->begin(), op->pmc->end(), r.op.pmc.begin());
    }
    if (op->expert_ids) {
      if (op->expert_ids->size() > kMaxExperts) {
        throw Error(ErrorCode::kDomain, "more than 8 experts at seq " + std::to_string(e.seq));
      }
      r.op.n_experts = static_cast<uint8_t>(op->expert_ids->size());
      std::copy(op->expert_ids->begin(), op->expert_ids->end(), r.op.experts.begin());
    }
  } else if (const GraphPayload* g = e.graph()) {
    r.guid = g->backend_guid;
  } else if (const TokenPayload* t = e.token()) {
    r.batch_size = t->batch_size;
  } else if (const SchedPayload* s = e.sched()) {
    r.sched.prev_tid = static_cast<uint32_t>(s->prev_tid.value_or(0));
    r.sched.next_tid = static_cast<uint32_t>(s->next_tid.value_or(0));
    r.sched.prev_state = s->prev_state.value_or(0);
    r.sched.wakee_tid = static_cast<uint32_t>(s->wakee_tid.value_or(0));
  }
  return r;
}

size_t PollAndDecode(BufferSource& source, SessionSink& sink) {
  size_t appended = 0;
  while (std::optional<WireSample> s = source.Next()) {
    if (s->type == WireSample::Type::kLost) {
      sink.ReportLost(s->lost);
      continue;
    }
    if (wire::IsHeaderRecord(s->bytes)) {
      sink.ApplyHeader(wire::DecodeHeader(s->bytes, s->offset));
      continue;
    }
    sink.Append(wire::DecodeRecord(s->bytes, s->offset));
    ++appended;
  }
  return appended;
}

std::string EncodeRecordedStream(const TraceSession& session, const wire::GgmlOpTable& op_table) {
  RecordedWireWriter out;
  wire::StreamHeader h;
  h.flags = session.header.flags;
  h.n_pmc = static_cast<uint8_t>(session.header.pmc_specs.size());
  out.AddRecord(wire::EncodeHeader(h));
  uint64_t expected = 0;
  for (const RawEvent& e : session.events) {
    if (e.seq < expected) {
      throw Error(ErrorCode::kDomain, "events must be in seq order to record a stream");
    }
    if (e.seq > expected) out.AddLost(e.seq - expected);
    out.AddRecord(wire::EncodeRecord(EventToWireRecord(e, op_table)));
    expected = e.seq + 1;
  }
  return out.bytes();
}

// ---------------------------------------------------------------------------

std::optional<std::filesystem::path> ResolveConfigPath(
    const std::optional<std::filesystem::path>& cli_path) {
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return cli_path;
}

TracerConfig TracerConfigFromTable(const ConfigTable& t) {
  TracerConfig c;
  if (t.Has("levels")) {
    c.levels.clear();
    for (const std::string& name : t.GetStringList("levels")) {
      std::optional<TraceLevel> level = ParseTraceLevel(name);
      if (!level) throw Error(ErrorCode::kConfig, "unknown trace level '" + name + "'");
      c.levels.insert(*level);
    }
  }
  c.flags.str = t.GetBool("flags.str", c.flags.str);
  c.flags.pmc = t.GetBool("flags.pmc", c.flags.pmc);
  c.flags.perf_buffer = t.GetBool("flags.perf_buffer", c.flags.perf_buffer);

  c.qos_target_tps = t.GetDouble("qos.target_tps", c.qos_target_tps);
  int64_t window = t.GetInt("qos.window", static_cast<int64_t>(c.qos_window));
  c.qos_margin = t.GetDouble("qos.margin", c.qos_margin);
  if (c.qos_target_tps < 0) throw Error(ErrorCode::kConfig, "qos.target_tps must be >= 0");
  if (window < 1) throw Error(ErrorCode::kConfig, "qos.window must be >= 1");
  if (c.qos_margin < 0) throw Error(ErrorCode::kConfig, "qos.margin must be >= 0");
  c.qos_window = static_cast<size_t>(window);

  if (t.Has("pmc")) {
    for (const std::string& name : t.GetStringList("pmc")) {
      std::optional<PmcSpec> spec = CanonicalPmcSpec(name);
      if (!spec) throw Error(ErrorCode::kConfig, "unknown counter '" + name + "'");
      c.pmcs.push_back(*spec);
    }
    if (c.pmcs.size() > kMaxPmcs) throw Error(ErrorCode::kConfig, "at most 8 counters");
  } else if (c.flags.pmc) {
    c.pmcs = CanonicalPmcSpecs();
  }

  if (t.Has("target.pid")) c.target_pid = static_cast<Pid>(t.GetInt("target.pid", 0));
  c.target_binary = t.GetString("target.binary", "");
  constexpr std::string_view kLibPrefix = "libraries.";
  for (const auto& [key, value] : t.entries()) {
    if (key.rfind(kLibPrefix, 0) == 0) {
      c.library_overrides[key.substr(kLibPrefix.size())] = t.GetString(key, "");
    }
  }
  c.sched_semantics = t.GetString("timeline.sched_semantics", c.sched_semantics);
  if (c.sched_semantics != "paper" && c.sched_semantics != "kernel") {
    throw Error(ErrorCode::kConfig, "sched_semantics must be 'paper' or 'kernel'");
  }
  return c;
}

SessionHeader MakeSessionHeader(const TracerConfig& config, std::set<Tid> inference_tids,
                                uint32_t nthreads) {
  SessionHeader h;
  h.flags = config.flags;
  if (config.flags.pmc) h.pmc_specs = config.pmcs;
  h.inference_tids = std::move(inference_tids);
  h.qos_target_tps = config.qos_target_tps;
  h.nthreads = nthreads;
  return h;
}

bool LiveTracingAvailable() { return false; }

TraceSession RunLiveTrace(const TracerConfig& config) {
  // Validate the plan so configuration mistakes surface before the platform
  // check does.
  BuildProbePlan(config.flags, config.levels, config.library_overrides);
  throw Error(ErrorCode::kUnsupported,
              "live tracing needs a BPF loader, which this build does not include; "
              "replay a recorded stream with `trace --replay <file>` instead");
}

}  // namespace profinfer
