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

#ifndef PROFINFER_TRACER_CONTROL_H_
#define PROFINFER_TRACER_CONTROL_H_

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profinfer/config.h"
#include "profinfer/event_model.h"
#include "profinfer/wire_format.h"

namespace profinfer {

// ---------------------------------------------------------------------------
// Probe plan
// ---------------------------------------------------------------------------

// Granularity a user can ask for.
enum class TraceLevel : uint8_t { kToken, kGraph, kOp, kKernel };

// Granularity of one plan entry; operator probes are split per backend.
enum class PlanLevel : uint8_t { kToken, kGraph, kOpCpu, kOpGpu, kOpNpu, kKernel };

enum class AttachType : uint8_t { kFunctionEntry, kFunctionReturn, kKernelTracepoint };

const char* TraceLevelName(TraceLevel level);
std::optional<TraceLevel> ParseTraceLevel(std::string_view name);
const char* PlanLevelName(PlanLevel level);
const char* AttachTypeName(AttachType type);

struct ProbeEntry {
  std::string target_symbol;
  std::string library;  // empty for kernel tracepoints
  AttachType attach = AttachType::kFunctionEntry;
  ProbeKind kind = ProbeKind::kTokenEnter;
  PlanLevel level = PlanLevel::kToken;
  bool operator==(const ProbeEntry&) const = default;
};

struct ProbePlan {
  ProbeFlags flags;
  std::vector<ProbeEntry> entries;
};

// One row per probed function or tracepoint; function rows expand into an
// entry and a return probe.
struct ProbeTarget {
  std::string symbol;
  std::string library;
  PlanLevel level;
  bool is_tracepoint;
};
const std::vector<ProbeTarget>& DefaultProbeTargets();

// Throws ErrorCode::kConfig when |levels| is empty.
ProbePlan BuildProbePlan(const ProbeFlags& flags, const std::set<TraceLevel>& levels);
ProbePlan BuildProbePlan(const ProbeFlags& flags, const std::set<TraceLevel>& levels,
                         const std::map<std::string, std::string>& library_overrides);

// ---------------------------------------------------------------------------
// QoS feedback loop
// ---------------------------------------------------------------------------

// Classes a handler checks in the shared control map before doing work.
enum class ProbeClass : uint8_t { kToken = 0, kGraph, kOp, kStr, kPmc };
inline constexpr size_t kNumProbeClasses = 5;

const char* ProbeClassName(ProbeClass c);

class ProbeMask {
 public:
  static ProbeMask All();
  static ProbeMask None();
  static ProbeMask FromFlags(const ProbeFlags& flags);

  bool Has(ProbeClass c) const { return bits_.test(static_cast<size_t>(c)); }
  void Set(ProbeClass c, bool on) { bits_.set(static_cast<size_t>(c), on); }
  size_t Count() const { return bits_.count(); }
  bool operator==(const ProbeMask&) const = default;

  std::string ToString() const;

 private:
  std::bitset<kNumProbeClasses> bits_;
};

// Bytes written into the kernel control map, one enabled byte per class.
std::array<uint8_t, kNumProbeClasses> ControlMapImage(const ProbeMask& mask);

// Classes are shed in this order when decoding is too slow and restored in
// the reverse order once it recovers. Token probes are never shed.
inline constexpr std::array<ProbeClass, 4> kShedOrder = {
    ProbeClass::kPmc, ProbeClass::kStr, ProbeClass::kOp, ProbeClass::kGraph};

struct QosController {
  double target_tps = 5.0;
  size_t window = 16;
  double hysteresis_margin = 0.2;
  ProbeMask mask = ProbeMask::All();
  // Upper bound on what may be re-enabled: the classes the session started with.
  ProbeMask allowed = ProbeMask::All();
};

struct QosDecision {
  ProbeMask mask;
  std::vector<ProbeClass> disabled;
  std::vector<ProbeClass> enabled;
};

// Sheds at most one class below target speed and restores at most one class
// above target * (1 + margin). Only the last |window| samples are used.
QosDecision QosUpdate(const QosController& controller, std::span<const int64_t> recent_tpot_ns);

// Fraction of per-core CPU time spent in probe handlers:
//   sum(costs) / (runtime * nthreads).
double ProbeOverhead(std::span<const int64_t> probe_costs_ns, int64_t runtime_ns,
                     uint32_t nthreads);

// ---------------------------------------------------------------------------
// Buffer polling
// ---------------------------------------------------------------------------

struct WireSample {
  enum class Type { kRecord, kLost };
  Type type = Type::kRecord;
  std::string_view bytes;  // kRecord: exactly one record
  uint64_t lost = 0;       // kLost: count reported by the perf buffer
  size_t offset = 0;       // position in the source, for error messages
};

class BufferSource {
 public:
  virtual ~BufferSource() = default;
  // Returns nullopt when the source is drained.
  virtual std::optional<WireSample> Next() = 0;
};

// Reads a recorded stream: a sequence of u32-length-prefixed samples. A
// length of 0xffffffff introduces a u64 lost-record count instead.
class RecordedWireSource : public BufferSource {
 public:
  explicit RecordedWireSource(std::string_view bytes) : bytes_(bytes) {}
  std::optional<WireSample> Next() override;

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

inline constexpr uint32_t kLostMarker = 0xffffffffu;

// Writer for recorded streams, used by the replay tooling and tests.
class RecordedWireWriter {
 public:
  void AddRecord(std::string_view record_bytes);
  void AddLost(uint64_t count);
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

// Owns the session under construction and the consumer-side seq counter.
class SessionSink {
 public:
  explicit SessionSink(TraceSession* session,
                       wire::GgmlOpTable op_table = wire::GgmlOpTable::Default());

  // Runs |controller| after every TokenExit; |on_mask_change| is called
  // with the new mask whenever a class is toggled.
  void EnableQos(QosController controller, std::function<void(const QosDecision&)> on_change);
  const std::optional<QosController>& qos() const { return qos_; }

  void Append(const wire::WireRecord& record);
  void ApplyHeader(const wire::StreamHeader& header);
  void ReportLost(uint64_t count);

  TraceSession& session() { return *session_; }
  uint64_t next_seq() const { return next_seq_; }

 private:
  void FeedQos(const RawEvent& exit_event);

  TraceSession* session_;
  wire::GgmlOpTable op_table_;
  uint64_t next_seq_ = 0;
  std::optional<QosController> qos_;
  std::function<void(const QosDecision&)> on_qos_change_;
  std::optional<int64_t> pending_token_enter_ts_;
  uint32_t pending_token_batch_ = 0;
  std::vector<int64_t> tpot_history_;
};

// Converts one wire record into an event. Optional regions not covered by
// |enabled|, or that the handler flagged unreadable, come back absent.
RawEvent DecodeWireRecordToEvent(const wire::WireRecord& record, const ProbeFlags& enabled,
                                 const wire::GgmlOpTable& op_table, uint64_t seq);

// Inverse of the above for well-formed events; used to build recorded
// streams from generated sessions.
wire::WireRecord EventToWireRecord(const RawEvent& event, const wire::GgmlOpTable& op_table);

// Drains |source| into |sink|; returns the number of events appended.
size_t PollAndDecode(BufferSource& source, SessionSink& sink);

// Serializes a whole session as a recorded stream (header record first).
// Seq gaps in |session| become lost-count samples so the decoded session
// keeps them.
std::string EncodeRecordedStream(const TraceSession& session,
                                 const wire::GgmlOpTable& op_table = wire::GgmlOpTable::Default());

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TracerConfig {
  std::set<TraceLevel> levels = {TraceLevel::kToken, TraceLevel::kGraph, TraceLevel::kOp};
  ProbeFlags flags{true, false, false};
  double qos_target_tps = 0.0;  // 0 disables the feedback loop
  size_t qos_window = 16;
  double qos_margin = 0.2;
  std::vector<PmcSpec> pmcs;
  std::optional<Pid> target_pid;
  std::string target_binary;
  // symbol -> library path, overriding DefaultProbeTargets()
  std::map<std::string, std::string> library_overrides;
  std::string sched_semantics = "paper";
};

inline constexpr char kConfigEnvVar[] = "PROFINFER_CONFIG";

// PROFINFER_CONFIG, when set, takes precedence over |cli_path|.
std::optional<std::filesystem::path> ResolveConfigPath(
    const std::optional<std::filesystem::path>& cli_path);

TracerConfig TracerConfigFromTable(const ConfigTable& table);

// Header a live or replayed session starts with.
SessionHeader MakeSessionHeader(const TracerConfig& config, std::set<Tid> inference_tids,
                                uint32_t nthreads);

// Live attachment needs a BPF loader; builds without one report false and
// RunLiveTrace throws ErrorCode::kUnsupported.
bool LiveTracingAvailable();
TraceSession RunLiveTrace(const TracerConfig& config);

}  // namespace profinfer

#endif  // PROFINFER_TRACER_CONTROL_H_
