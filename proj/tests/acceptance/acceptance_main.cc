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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every line passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "profinfer/event_model.h"
#include "profinfer/profdag.h"
#include "profinfer/profstat.h"
#include "profinfer/proftime.h"
#include "profinfer/synth_workload.h"
#include "profinfer/trace_ingest.h"
#include "profinfer/tracer_control.h"
#include "profinfer/wire_format.h"
#include "testing/fixtures.h"
#include "testing/oracles.h"
#include "testing/random_specs.h"

namespace profinfer {
namespace {

using Clock = std::chrono::steady_clock;

// Collects failures for one criterion; keeps the first few messages.
class Check {
 public:
  void Expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (messages_.size() < 5) messages_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  size_t checks() const { return checks_; }
  size_t failures() const { return failures_; }
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  size_t checks_ = 0;
  size_t failures_ = 0;
  std::vector<std::string> messages_;
};

int g_failed = 0;

void Report(const char* tag, const char* name, const Check& c, const std::string& detail) {
  std::printf("%s %-28s %s [%s] %zu checks, %zu failed\n", c.ok() ? "PASS" : "FAIL", name, detail.c_str(),
              tag, c.checks(), c.failures());
  for (const std::string& m : c.messages()) std::printf("       %s\n", m.c_str());
  if (!c.ok() && std::string(tag) == "primary") ++g_failed;
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::vector<testing::RandomSpec> DrawSpecs(uint64_t seed, size_t n) {
  std::mt19937_64 rng(seed);
  std::vector<testing::RandomSpec> out;
  for (size_t i = 0; i < n; ++i) out.push_back(testing::DrawSpec(rng));
  return out;
}

// ---------------------------------------------------------------------------

void DagOracle(const std::vector<testing::RandomSpec>& specs) {
  Check c;
  auto start = Clock::now();
  size_t dags = 0;
  for (const testing::RandomSpec& spec : specs) {
    RunSpec run = spec.run;
    run.drop_rate = 0;
    SynthOutput out = GenerateSession(spec.model, run);
    IngestResult ingest = Ingest(out.session);
    for (const TruthIteration& t : out.truth.iterations) {
      ProfDag dag = BuildProfDag(ingest, out.session.header, t.iteration);
      ++dags;
      const std::string where = spec.Describe() + " iter " + std::to_string(t.iteration);
      c.Expect(dag.nodes == t.dag.nodes, "node set differs: " + where);
      c.Expect(dag.edges == t.dag.edges, "edge set differs: " + where);
      std::vector<const OpNode*> ops = dag.OpsInOrder();
      bool order_ok = ops.size() == t.ops.size();
      for (size_t i = 0; order_ok && i < ops.size(); ++i) order_ok = ops[i]->addr == t.ops[i].addr;
      c.Expect(order_ok, "execution order differs: " + where);
    }
  }
  double secs = std::chrono::duration<double>(Clock::now() - start).count();
  c.Expect(secs < 30.0, "took " + Fmt(secs) + " s");
  Report("primary", "dag-oracle-equivalence", c,
         std::to_string(specs.size()) + " configs, " + std::to_string(dags) + " DAGs in " +
             Fmt(secs) + " s");
}

void ElapsedPmcBruteForce(const std::vector<testing::RandomSpec>& specs) {
  Check c;
  size_t ops = 0;
  for (const testing::RandomSpec& spec : specs) {
    RunSpec run = spec.run;
    run.drop_rate = 0;
    SynthOutput out = GenerateSession(spec.model, run);
    IngestResult ingest = Ingest(out.session);
    for (const IterationIndex& it : ingest.iterations) {
      ProfDag dag = BuildProfDag(ingest, out.session.header, it.iteration);
      std::map<Addr, testing::NaiveOp> naive =
          testing::NaiveOpScan(out.session, it.token_enter.ts_ns, it.token_exit.ts_ns);
      for (const OpNode* n : dag.OpsInOrder()) {
        ++ops;
        auto found = naive.find(n->addr);
        if (found == naive.end()) {
          c.Expect(false, "op missing from naive scan: " + n->op_name);
          continue;
        }
        c.Expect(n->elapsed_ns == found->second.elapsed(),
                 "elapsed mismatch " + n->op_name + ": " + spec.Describe());
        c.Expect(n->pmc_totals == found->second.pmc_sum,
                 "pmc mismatch " + n->op_name + ": " + spec.Describe());
      }
    }
  }
  Report("primary", "elapsed-pmc-brute-force", c, std::to_string(ops) + " op instances");
}

void LossTolerance(const std::vector<testing::RandomSpec>& specs) {
  Check c;
  size_t orphans = 0, dropped = 0;
  const double rates[] = {0.005, 0.01, 0.02, 0.03, 0.05};
  for (size_t i = 0; i < specs.size(); ++i) {
    testing::RandomSpec spec = specs[i];
    spec.run.drop_rate = rates[i % 5];
    SynthOutput out = GenerateSession(spec.model, spec.run);
    dropped += out.truth.dropped_seqs.size();
    IngestResult r = Ingest(out.session);
    size_t non_op = 0;
    for (const RawEvent& e : out.session.events) non_op += IsOpKind(e.kind) ? 0 : 1;
    c.Expect(out.session.events.size() == 2 * r.spans.size() + r.orphans.size() + non_op,
             "conservation broken: " + spec.Describe());
    const std::vector<uint64_t>& gaps = out.truth.dropped_seqs;
    for (const RawEvent& o : r.orphans) {
      ++orphans;
      // Neighborhood: the seq range between the orphan's thread neighbors.
      const std::vector<RawEvent>& list = r.groups.inference.at(o.tid);
      auto it = std::find_if(list.begin(), list.end(),
                             [&](const RawEvent& e) { return e.seq == o.seq; });
      uint64_t lo = it == list.begin() ? 0 : std::prev(it)->seq;
      uint64_t hi = std::next(it) == list.end() ? UINT64_MAX : std::next(it)->seq;
      bool gap = std::any_of(gaps.begin(), gaps.end(),
                             [&](uint64_t d) { return d > lo && d < hi; });
      c.Expect(gap, "orphan seq " + std::to_string(o.seq) + " has no nearby gap: " +
                        spec.Describe());
    }
  }
  Report("primary", "loss-tolerance", c,
         std::to_string(specs.size()) + " sessions, " + std::to_string(dropped) + " drops, " +
             std::to_string(orphans) + " orphans");
}

void TimelineValidity(const std::vector<testing::RandomSpec>& specs) {
  Check c;
  for (const testing::RandomSpec& base : specs) {
    testing::RandomSpec spec = base;
    spec.run.sched_events = true;
    spec.run.drop_rate = 0.01;
    SynthOutput out = GenerateSession(spec.model, spec.run);
    IngestResult ingest = Ingest(out.session);
    TimelineDoc doc = BuildTimeline(out.session, ingest);
    std::string text = EmitChromeTrace(doc);
    testing::ParsedTrace parsed;
    try {
      parsed = testing::ParseChromeTrace(text);
    } catch (const std::exception& e) {
      c.Expect(false, std::string("unparsable trace: ") + e.what());
      continue;
    }
    for (const auto& e : parsed.complete_events) {
      c.Expect(e.ts >= 0 && e.dur >= 0, "negative ts/dur on " + e.name);
    }
    c.Expect(parsed.doc == doc, "round trip differs: " + spec.Describe());
    for (const auto& [tid, events] : doc.tracks) {
      std::map<std::string, int64_t> end;
      for (const DurationEvent& d : events) {
        auto it = end.find(d.category);
        c.Expect(it == end.end() || d.start_ns >= it->second, "overlap on tid " +
                                                                   std::to_string(tid) + ": " + d.name);
        end[d.category] = std::max(end[d.category], d.end_ns());
      }
    }
    for (const auto& [tid, ivs] : doc.states) {
      for (size_t i = 0; i < ivs.size(); ++i) {
        c.Expect(ivs[i].start_ns < ivs[i].end_ns, "empty state interval");
        if (i > 0) c.Expect(ivs[i].start_ns == ivs[i - 1].end_ns, "state gap/overlap");
      }
    }
  }
  // The three-event example under the verbatim rules.
  TraceSession s;
  testing::EventBuilder b(&s);
  b.Wakeup(100, 5);
  b.Switch(200, 0, 5, 0);
  b.Switch(300, 5, 0, 1);
  ThreadStates st = DeriveThreadStates(s.events, {5}, SchedSemantics::kPaper);
  std::vector<ThreadState> seen;
  for (const StateTransition& t : st.transitions[5]) seen.push_back(t.state);
  c.Expect(seen == std::vector<ThreadState>{ThreadState::kRunnable, ThreadState::kRunning,
                                            ThreadState::kRunnable},
           "three-event example mapping");
  Report("primary", "timeline-validity", c, std::to_string(specs.size()) + " sessions");
}

void ProfStatFormulas() {
  Check c;
  std::vector<int64_t> pmc{1000, 500, 0, 0, 0};
  MemoryTraffic t = ComputeMemoryTraffic(pmc, CanonicalPmcSpecs(), 1'000'000);
  c.Expect(t.bandwidth_bytes_per_s == 72e6, "bandwidth " + Fmt(t.bandwidth_bytes_per_s));
  c.Expect(t.bytes_read == 64000 && t.bytes_written == 8000, "byte counts");
  c.Expect(ComputeStalledRatio(80, 100).ratio == 0.8, "stalled ratio");
  c.Expect(MatmulComplexity(1, 2048, 2048, 1) == 4'194'304, "complexity");

  // Exact-linear data from the generator's matmul cost model.
  double worst = 0;
  for (const char* preset : {"llama", "qwen", "dense2"}) {
    ModelSpec model = *ModelPreset(preset);
    RunSpec run;
    run.flags.pmc = false;
    SynthOutput out = GenerateSession(model, run);
    std::vector<double> x, y;
    for (const MatMulSample& s : CollectMatMulSamples(Ingest(out.session), out.session.header)) {
      x.push_back(static_cast<double>(s.complexity));
      y.push_back(static_cast<double>(s.elapsed_ns));
    }
    LinearFit f = FitLinear(x, y);
    double a = run.cost.ns_per_unit_complexity;
    double b = static_cast<double>(run.cost.per_op_overhead_ns +
                                   run.cost.matmul_ns_per_hidden * model.hidden_dim);
    double ea = std::abs(f.slope - a) / a, eb = std::abs(f.intercept - b) / b;
    worst = std::max({worst, ea, eb});
    c.Expect(ea <= 1e-9 && eb <= 1e-9, std::string(preset) + ": slope " + Fmt(f.slope) +
                                           " intercept " + Fmt(f.intercept));
    c.Expect(f.r2 == 1.0, std::string(preset) + ": r2 " + Fmt(f.r2));
  }
  Report("primary", "profstat-formulas", c, "worst fit rel. error " + Fmt(worst));
}

void ExpertAnalytics() {
  Check c;
  // Hand-fixed sequence: prefill, then three decodes activating {1,2}, {1,3}, {2,3}.
  const std::vector<std::vector<uint32_t>> rows = {{1, 2}, {1, 3}, {2, 3}};
  TraceSession s;
  s.header = testing::BasicHeader({1});
  s.header.experts_per_token = 2;
  testing::EventBuilder b(&s);
  int64_t ts = 0;
  for (size_t it = 0; it <= rows.size(); ++it) {
    b.Token(ProbeKind::kTokenEnter, ts, 1, it == 0 ? 4 : 1);
    for (ProbeKind k : {ProbeKind::kOpEnter, ProbeKind::kOpExit}) {
      RawEvent& e = b.Op(k, ts + (k == ProbeKind::kOpEnter ? 10 : 60), 1, 0xE0,
                         OpKind::kMulMatId, "ffn_moe_up-0");
      auto& p = std::get<OpPayload>(e.payload);
      p.dims = Dims{8, 2, 1, 1};
      p.src_addrs = std::vector<Addr>{0xA, 0xB, 0xC};
      p.expert_ids = it == 0 ? std::vector<uint32_t>{0, 1} : rows[it - 1];
    }
    b.Token(ProbeKind::kTokenExit, ts + 100, 1, it == 0 ? 4 : 1);
    ts += 200;
  }
  ExpertActivationMatrix m = AnalyzeExperts(Ingest(s), "ffn_moe_up-0");
  c.Expect(m.rows.size() == 3, "row count");
  for (size_t i = 0; i < m.rows.size() && i < rows.size(); ++i) {
    c.Expect(m.rows[i].avg_distance == testing::BruteReuseDistance(rows, i),
             "avg distance row " + std::to_string(i));
  }
  c.Expect(m.rows.size() == 3 && m.rows[2].avg_distance == 1.5, "worked example 1.5");

  // Generated MoE sessions with the miss penalty on.
  double min_r = 1;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10; ++i) {
    ModelSpec model = *ModelPreset("moe");
    if (i % 2) {
      model.total_experts = 8 + static_cast<uint32_t>(rng() % 24);
      model.experts_per_token = 1 + static_cast<uint32_t>(rng() % 4);
    }
    RunSpec run;
    run.gen_len = 32;
    run.seed = rng();
    SynthOutput out = GenerateSession(model, run);
    IngestResult ingest = Ingest(out.session);
    for (const std::string& op : GatedOpNames(ingest)) {
      ExpertActivationMatrix mm = AnalyzeExperts(ingest, op);
      double sum = 0;
      for (const auto& [e, d] : mm.density) sum += d;
      c.Expect(std::abs(sum - model.experts_per_token) <= 1e-12, op + ": density sum " + Fmt(sum));
      std::vector<double> dist, elapsed;
      for (const ExpertRow& r : mm.rows) {
        dist.push_back(r.avg_distance);
        elapsed.push_back(static_cast<double>(r.elapsed_ns));
      }
      double r = PearsonCorrelation(dist, elapsed);
      min_r = std::min(min_r, r);
      c.Expect(r > 0.9, op + ": pearson " + Fmt(r));
    }
  }
  Report("primary", "expert-analytics", c, "min pearson r " + Fmt(min_r));
}

void QosController_() {
  Check c;
  auto tpots = [](double tps) { return std::vector<int64_t>(16, std::llround(1e9 / tps)); };
  QosController q;
  q.target_tps = 5.0;
  std::vector<ProbeClass> disabled, enabled;
  for (double tps : {6.0, 5.5, 4.9, 4.5, 4.0, 3.5, 3.0, 2.0}) {
    QosDecision d = QosUpdate(q, tpots(tps));
    disabled.insert(disabled.end(), d.disabled.begin(), d.disabled.end());
    c.Expect(d.enabled.empty(), "enabled while slow");
    q.mask = d.mask;
  }
  c.Expect(disabled == std::vector<ProbeClass>{ProbeClass::kPmc, ProbeClass::kStr, ProbeClass::kOp,
                                               ProbeClass::kGraph},
           "shed order");
  c.Expect(q.mask.Has(ProbeClass::kToken), "token probes kept");
  for (double tps : {5.5, 6.0, 7.0, 8.0, 9.0, 10.0}) {  // 6.0 is not above 5 * 1.2
    QosDecision d = QosUpdate(q, tpots(tps));
    enabled.insert(enabled.end(), d.enabled.begin(), d.enabled.end());
    c.Expect(tps > 6.0 || d.enabled.empty(), "restored inside the hysteresis band");
    q.mask = d.mask;
  }
  c.Expect(enabled == std::vector<ProbeClass>{ProbeClass::kGraph, ProbeClass::kOp, ProbeClass::kStr,
                                              ProbeClass::kPmc},
           "restore order");
  // Boundary-alternating stream: once shed, nothing comes back.
  for (size_t window : {1u, 4u, 16u}) {
    QosController a;
    a.window = window;
    std::vector<int64_t> hist;
    for (int i = 0; i < 200; ++i) {
      hist.push_back(std::llround(1e9 / (i % 2 ? 5.1 : 4.9)));
      QosDecision d = QosUpdate(a, hist);
      c.Expect(d.enabled.empty(), "oscillation at step " + std::to_string(i));
      a.mask = d.mask;
    }
  }
  Report("primary", "qos-controller", c, "target 5 tok/s, margin 0.2");
}

void OverheadFormula() {
  Check c;
  std::vector<int64_t> costs{28'000'000};
  double v = ProbeOverhead(costs, 1'000'000'000, 4);
  c.Expect(std::abs(v - 0.007) < 1e-15, "overhead " + Fmt(v));
  Report("primary", "overhead-formula", c, "28 ms / (1000 ms x 4) = " + Fmt(v));
}

void WireConformance() {
  Check c;
  wire::GgmlOpTable table = wire::GgmlOpTable::Default();
  size_t records = 0;
  std::mt19937_64 rng(99);
  for (int i = 0; i < 10; ++i) {
    testing::RandomSpec spec = testing::DrawSpec(rng);
    spec.run.sched_events = true;
    TraceSession s = GenerateSession(spec.model, spec.run).session;
    for (const RawEvent& e : s.events) {
      wire::WireRecord r = EventToWireRecord(e, table);
      std::string bytes = wire::EncodeRecord(r);
      ++records;
      c.Expect(bytes.size() == wire::kRecordSize, "record size");
      c.Expect(wire::EncodeRecord(wire::DecodeRecord(bytes)) == bytes, "bytes not stable");
      c.Expect(DecodeWireRecordToEvent(wire::DecodeRecord(bytes), s.header.flags, table, e.seq) == e,
               std::string("event round trip ") + ProbeKindName(e.kind));
      if (e.op()) {
        RawEvent bare = DecodeWireRecordToEvent(wire::DecodeRecord(bytes), ProbeFlags{}, table, e.seq);
        c.Expect(!bare.op()->dims && !bare.op()->src_addrs && !bare.op()->pmc,
                 "disabled regions not absent");
      }
    }
  }
  Report("secondary", "wire-conformance", c, std::to_string(records) + " records");
}

}  // namespace
}  // namespace profinfer

int main() {
  using namespace profinfer;
  std::vector<testing::RandomSpec> specs = DrawSpecs(20260101, 120);
  DagOracle(specs);
  ElapsedPmcBruteForce(specs);
  LossTolerance(specs);
  TimelineValidity(std::vector<testing::RandomSpec>(specs.begin(), specs.begin() + 40));
  ProfStatFormulas();
  ExpertAnalytics();
  QosController_();
  OverheadFormula();
  WireConformance();
  std::printf("%s: %d primary criteria failed\n", g_failed ? "FAIL" : "PASS", g_failed);
  return g_failed ? 1 : 0;
}
