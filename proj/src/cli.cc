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

#include "profinfer/cli.h"

#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "profinfer/config.h"
#include "profinfer/error.h"
#include "profinfer/profdag.h"
#include "profinfer/profstat.h"
#include "profinfer/proftime.h"
#include "profinfer/session_io.h"
#include "profinfer/synth_workload.h"
#include "profinfer/trace_ingest.h"
#include "profinfer/tracer_control.h"

namespace profinfer {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string in;
  std::string out;
  std::string config;
  std::string replay;
  std::string wire_out;
  std::string model;
  std::string view = "tokens";
  std::string op;
  std::string metric = "elapsed";
  std::string patterns;
  std::string sched_semantics;
  int64_t iter = 0;
  size_t palette = 9;

  std::optional<uint64_t> seed;
  std::optional<int64_t> prompt_len;
  std::optional<int64_t> gen_len;
  std::optional<uint32_t> threads;
  std::optional<double> drop_rate;
  std::optional<int64_t> gpu_layers;
  bool sched = false;
  bool no_str = false;
  bool no_pmc = false;
};

TraceSession LoadInput(const std::string& path) {
  if (path.empty()) throw UsageError("--in is required");
  if (!fs::exists(path)) throw UsageError("input file '" + path + "' does not exist");
  return ReadSessionFile(path);
}

std::optional<ConfigTable> LoadConfig(const std::string& cli_path) {
  std::optional<fs::path> p =
      ResolveConfigPath(cli_path.empty() ? std::nullopt : std::optional<fs::path>(cli_path));
  if (!p) return std::nullopt;
  if (!fs::exists(*p)) throw UsageError("config file '" + p->string() + "' does not exist");
  return ConfigTable::Load(p->string());
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    std::string item = s.substr(start, end - start);
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

fs::path OutDir(const std::string& out) {
  fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

int CmdSynth(const Options& o, bool model_given, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  ConfigTable table = LoadConfig(o.config).value_or(ConfigTable{});
  if (model_given || !table.Has("model.preset")) {
    std::string preset = o.model.empty() ? "dense2" : o.model;
    if (!ModelPreset(preset)) {
      std::string names;
      for (const std::string& n : ModelPresetNames()) names += (names.empty() ? "" : ", ") + n;
      throw UsageError("unknown model '" + preset + "'; choose one of: " + names);
    }
    table.Set("model.preset", ConfigValue{preset});
  }
  auto [model, run] = SynthSpecFromTable(table);
  if (o.seed) run.seed = *o.seed;
  if (o.prompt_len) run.prompt_len = *o.prompt_len;
  if (o.gen_len) run.gen_len = *o.gen_len;
  if (o.threads) run.nthreads = *o.threads;
  if (o.drop_rate) run.drop_rate = *o.drop_rate;
  if (o.gpu_layers) run.gpu_layers = *o.gpu_layers;
  if (o.sched) run.sched_events = true;
  if (o.no_str) run.flags.str = false;
  if (o.no_pmc) run.flags.pmc = false;

  SynthOutput s = GenerateSession(model, run);
  WriteSessionFile(o.out, s.session);
  if (!o.wire_out.empty()) WriteFileBytes(o.wire_out, EncodeRecordedStream(s.session));
  out << "wrote " << s.session.events.size() << " events, " << s.truth.iterations.size()
      << " iterations of " << model.name << " to " << o.out << "\n";
  return kExitOk;
}

int CmdTrace(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw UsageError("--out is required");
  std::optional<ConfigTable> table = LoadConfig(o.config);
  TracerConfig cfg = table ? TracerConfigFromTable(*table) : TracerConfig{};
  if (o.replay.empty()) {
    TraceSession s = RunLiveTrace(cfg);
    WriteSessionFile(o.out, s);
    return kExitOk;
  }
  if (!fs::exists(o.replay)) throw UsageError("replay file '" + o.replay + "' does not exist");
  std::string bytes = ReadFileBytes(o.replay);
  TraceSession s;
  s.header = MakeSessionHeader(cfg, {}, 1);
  SessionSink sink(&s);
  if (cfg.qos_target_tps > 0) {
    QosController qos;
    qos.target_tps = cfg.qos_target_tps;
    qos.window = cfg.qos_window;
    qos.hysteresis_margin = cfg.qos_margin;
    qos.mask = ProbeMask::FromFlags(cfg.flags);
    qos.allowed = qos.mask;
    sink.EnableQos(qos, [&err](const QosDecision& d) {
      err << "qos: probe mask now " << d.mask.ToString() << "\n";
    });
  }
  RecordedWireSource source(bytes);
  size_t n = PollAndDecode(source, sink);
  InferReplayHeader(s);
  WriteSessionFile(o.out, s);
  out << "replayed " << n << " records (" << s.header.lost_events << " lost) to " << o.out
      << "\n";
  return kExitOk;
}

int CmdDag(const Options& o, std::ostream& out, std::ostream& err) {
  TraceSession s = LoadInput(o.in);
  IngestResult ingest = Ingest(s);
  ProfDag dag = BuildProfDag(ingest, s.header, o.iter);
  std::string dot = ExportDot(dag, o.metric, o.palette);
  fs::path base = o.out.empty() ? fs::path("profdag") : fs::path(o.out);
  if (base.extension() == ".dot") base.replace_extension();
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  fs::path dot_path = base;
  dot_path += ".dot";
  fs::path json_path = base;
  json_path += ".json";
  WriteFileBytes(dot_path, dot);
  WriteFileBytes(json_path, ExportDagJson(dag));
  for (const std::string& w : dag.warnings) err << "warning: " << w << "\n";
  out << "iteration " << o.iter << ": " << dag.OpsInOrder().size() << " ops, "
      << dag.nodes.size() << " nodes, " << dag.edges.size() << " edges -> " << dot_path.string()
      << ", " << json_path.string() << "\n";
  return kExitOk;
}

int CmdTimeline(const Options& o, std::ostream& out, std::ostream& err) {
  TraceSession s = LoadInput(o.in);
  std::string name = o.sched_semantics;
  if (name.empty()) {
    std::optional<ConfigTable> table = LoadConfig(o.config);
    name = table ? TracerConfigFromTable(*table).sched_semantics : "paper";
  }
  std::optional<SchedSemantics> sem = ParseSchedSemantics(name);
  if (!sem) throw UsageError("--sched-semantics must be paper or kernel, got '" + name + "'");
  IngestResult ingest = Ingest(s);
  TimelineDoc doc = BuildTimeline(s, ingest, TimelineOptions{*sem});
  fs::path path = o.out.empty() ? fs::path("timeline.json") : fs::path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  WriteFileBytes(path, EmitChromeTrace(doc));
  for (const std::string& a : doc.anomalies) err << "anomaly: " << a << "\n";
  size_t n = 0;
  for (const auto& [tid, events] : doc.tracks) n += events.size();
  out << "wrote " << n << " spans on " << doc.tracks.size() << " threads ("
      << SchedSemanticsName(*sem) << " sched semantics) to " << path.string() << "\n";
  return kExitOk;
}

int CmdStats(const Options& o, std::ostream& out) {
  TraceSession s = LoadInput(o.in);
  IngestResult ingest = Ingest(s);
  fs::path dir = OutDir(o.out);
  if (o.view == "tokens") {
    std::vector<std::string> patterns =
        o.patterns.empty() ? DefaultTokenPatterns() : SplitList(o.patterns);
    TokenSeries ts = ComputeTokenSeries(ingest, patterns);
    WriteFileBytes(dir / "tokens.csv", TokensCsv(ts));
    WriteFileBytes(dir / "tokens_plot.json", TokensPlotSpec(ts));
    out << "ttft_ns=" << ts.ttft_ns << " decode_tokens=" << ts.tpot_ns.size() << "\n";
  } else if (o.view == "ops") {
    WriteFileBytes(dir / "ops.csv", OpsCsv(CollectOpStats(ingest, s.header)));
    std::vector<MatMulSample> mm = CollectMatMulSamples(ingest, s.header);
    WriteFileBytes(dir / "matmuls.csv", MatMulsCsv(mm));
    WriteFileBytes(dir / "matmuls_plot.json", MatMulsPlotSpec(mm));
    out << mm.size() << " matmul samples\n";
  } else {
    std::string op = o.op;
    if (op.empty()) {
      std::vector<std::string> gated = GatedOpNames(ingest);
      if (gated.empty()) {
        throw Error(ErrorCode::kNotFound, "the session has no MUL_MAT_ID ops with expert ids");
      }
      op = gated.front();
    }
    ExpertActivationMatrix m = AnalyzeExperts(ingest, op);
    WriteFileBytes(dir / "experts.csv", ExpertsCsv(m));
    WriteFileBytes(dir / "expert_density.csv", ExpertDensityCsv(m));
    WriteFileBytes(dir / "experts_plot.json", ExpertsPlotSpec(m));
    out << op << ": " << m.rows.size() << " decode rows, k=" << m.k << "\n";
  }
  return kExitOk;
}

int CmdValidate(const Options& o, std::ostream& out) {
  TraceSession s = LoadInput(o.in);
  std::vector<Violation> v = ValidateSession(s);
  for (const Violation& x : v) out << x.message << "\n";
  out << v.size() << " violation" << (v.size() == 1 ? "" : "s") << "\n";
  return v.empty() ? kExitOk : kExitAnalysisError;
}

}  // namespace

void InferReplayHeader(TraceSession& session) {
  SessionHeader& h = session.header;
  for (const RawEvent& e : session.events) {
    if (const OpPayload* op = e.op(); op && op->expert_ids && h.experts_per_token == 0) {
      h.experts_per_token = static_cast<uint32_t>(op->expert_ids->size());
    }
  }
  if (h.inference_tids.empty()) {
    for (const RawEvent& e : session.events) {
      if (IsOpKind(e.kind) || IsGraphKind(e.kind) || IsTokenKind(e.kind)) {
        h.inference_tids.insert(e.tid);
      }
    }
  }
  std::set<Tid> workers;
  for (const RawEvent& e : session.events) {
    if (IsOpKind(e.kind)) workers.insert(e.tid);
  }
  if (!workers.empty()) h.nthreads = static_cast<uint32_t>(workers.size());
}

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Operator-level profiler for on-device LLM inference traces", "profinfer"};
  app.require_subcommand(1);
  Options o;

  CLI::App* trace = app.add_subcommand("trace", "Capture a session live, or replay a recorded stream");
  trace->add_option("--out", o.out, "Session file to write")->required();
  trace->add_option("--replay", o.replay, "Recorded wire stream to decode instead of tracing");
  trace->add_option("--config", o.config, "Tracer config (overridden by $PROFINFER_CONFIG)");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic session");
  synth->add_option("--out", o.out, "Session file to write")->required();
  synth->add_option("--model", o.model, "Model preset (dense2, llama, qwen, gemma, moe)");
  synth->add_option("--config", o.config, "Spec file with [model], [run], [cost] sections");
  synth->add_option("--seed", o.seed);
  synth->add_option("--prompt-len", o.prompt_len);
  synth->add_option("--gen-len", o.gen_len, "Decode iterations after the prefill");
  synth->add_option("--threads", o.threads);
  synth->add_option("--drop-rate", o.drop_rate, "Probability of losing each op record");
  synth->add_option("--gpu-layers", o.gpu_layers, "Offload the last N layers and the head");
  synth->add_flag("--sched", o.sched, "Emit scheduler events");
  synth->add_flag("--no-str", o.no_str, "Record without tensor metadata");
  synth->add_flag("--no-pmc", o.no_pmc, "Record without counters");
  synth->add_option("--wire", o.wire_out, "Also write the session as a recorded wire stream");

  CLI::App* dag = app.add_subcommand("dag", "Build the operator DAG of one iteration");
  dag->add_option("--in", o.in, "Session file")->required();
  dag->add_option("--iter", o.iter, "Iteration index")->required();
  dag->add_option("--metric", o.metric, "Heat metric")
      ->check(CLI::IsMember({"elapsed", "bandwidth", "refills", "stalled"}));
  dag->add_option("--palette", o.palette, "Number of heat colors")->check(CLI::Range(1, 64));
  dag->add_option("--out", o.out, "Output path prefix; writes <out>.dot and <out>.json");

  CLI::App* timeline = app.add_subcommand("timeline", "Export the timeline as a Chrome trace");
  timeline->add_option("--in", o.in, "Session file")->required();
  timeline->add_option("--out", o.out, "Trace JSON to write");
  timeline->add_option("--sched-semantics", o.sched_semantics, "paper or kernel")
      ->check(CLI::IsMember({"paper", "kernel"}));
  timeline->add_option("--config", o.config);

  CLI::App* stats = app.add_subcommand("stats", "Write statistics CSVs and plot specs");
  stats->add_option("--in", o.in, "Session file")->required();
  stats->add_option("--view", o.view)->check(CLI::IsMember({"tokens", "ops", "experts"}));
  stats->add_option("--patterns", o.patterns, "Comma-separated op name patterns");
  stats->add_option("--op", o.op, "Gated op for the experts view");
  stats->add_option("--out", o.out, "Output directory");

  CLI::App* validate = app.add_subcommand("validate", "Check a session against the event model");
  validate->add_option("--in", o.in, "Session file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (trace->parsed()) return CmdTrace(o, out, err);
    if (synth->parsed()) return CmdSynth(o, synth->count("--model") > 0, out);
    if (dag->parsed()) return CmdDag(o, out, err);
    if (timeline->parsed()) return CmdTimeline(o, out, err);
    if (stats->parsed()) return CmdStats(o, out);
    return CmdValidate(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << ErrorCodeName(e.code()) << "): " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitUsage : kExitAnalysisError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitAnalysisError;
  }
}

}  // namespace profinfer
