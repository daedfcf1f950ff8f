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

#include "profinfer/session_io.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "byte_io.h"
#include "json.hpp"
#include "profinfer/error.h"

namespace profinfer {

using json = nlohmann::json;

namespace {

constexpr std::string_view kBinaryMagic = "PFIS";
constexpr char kHeaderKey[] = "profinfer_header";

[[noreturn]] void ParseFail(const std::string& msg) { throw Error(ErrorCode::kParse, msg); }

Addr AddrFromJson(const json& j) {
  if (j.is_number_unsigned()) return j.get<uint64_t>();
  if (!j.is_string()) ParseFail("address must be a hex string");
  std::string s = j.get<std::string>();
  std::string_view v = s;
  if (v.substr(0, 2) == "0x" || v.substr(0, 2) == "0X") v.remove_prefix(2);
  Addr out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out, 16);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    ParseFail("bad address '" + s + "'");
  }
  return out;
}

json OpTypeToJson(const OpType& t) {
  if (t.is_unknown()) return t.raw();
  return t.Name();
}

OpType OpTypeFromJson(const json& j) {
  if (j.is_number_integer()) {
    return OpType::Unknown(j.get<int64_t>());
  }
  auto t = OpType::FromName(j.get<std::string>());
  if (!t) ParseFail("unknown op_type '" + j.get<std::string>() + "'");
  return *t;
}

json PayloadToJson(const RawEvent& ev) {
  json p = json::object();
  if (const auto* op = ev.op()) {
    p["op_addr"] = AddrToHex(op->op_addr);
    p["op_type"] = OpTypeToJson(op->op_type);
    p["op_name"] = op->op_name;
    p["backend"] = BackendName(op->backend);
    if (op->dims) p["dims"] = *op->dims;
    if (op->src_addrs) {
      json srcs = json::array();
      for (Addr a : *op->src_addrs) srcs.push_back(AddrToHex(a));
      p["src_addrs"] = std::move(srcs);
    }
    if (op->pmc) p["pmc"] = *op->pmc;
    if (op->expert_ids) p["expert_ids"] = *op->expert_ids;
  } else if (const auto* g = ev.graph()) {
    p["backend_guid"] = g->backend_guid;
  } else if (const auto* t = ev.token()) {
    p["batch_size"] = t->batch_size;
  } else if (const auto* s = ev.sched()) {
    if (s->prev_tid) p["prev_tid"] = *s->prev_tid;
    if (s->next_tid) p["next_tid"] = *s->next_tid;
    if (s->prev_state) p["prev_state"] = *s->prev_state;
    if (s->wakee_tid) p["wakee_tid"] = *s->wakee_tid;
  }
  return p;
}

Payload PayloadFromJson(ProbeKind kind, const json& p) {
  if (IsOpKind(kind)) {
    OpPayload op;
    op.op_addr = AddrFromJson(p.at("op_addr"));
    op.op_type = OpTypeFromJson(p.at("op_type"));
    op.op_name = p.at("op_name").get<std::string>();
    auto backend = ParseBackend(p.at("backend").get<std::string>());
    if (!backend) ParseFail("unknown backend '" + p.at("backend").get<std::string>() + "'");
    op.backend = *backend;
    if (p.contains("dims")) op.dims = p["dims"].get<Dims>();
    if (p.contains("src_addrs")) {
      std::vector<Addr> srcs;
      for (const auto& a : p["src_addrs"]) srcs.push_back(AddrFromJson(a));
      op.src_addrs = std::move(srcs);
    }
    if (p.contains("pmc")) op.pmc = p["pmc"].get<std::vector<uint64_t>>();
    if (p.contains("expert_ids")) op.expert_ids = p["expert_ids"].get<std::vector<uint32_t>>();
    return op;
  }
  if (IsGraphKind(kind)) return GraphPayload{p.at("backend_guid").get<std::string>()};
  if (IsTokenKind(kind)) return TokenPayload{p.at("batch_size").get<uint32_t>()};
  SchedPayload s;
  if (p.contains("prev_tid")) s.prev_tid = p["prev_tid"].get<Tid>();
  if (p.contains("next_tid")) s.next_tid = p["next_tid"].get<Tid>();
  if (p.contains("prev_state")) s.prev_state = p["prev_state"].get<int64_t>();
  if (p.contains("wakee_tid")) s.wakee_tid = p["wakee_tid"].get<Tid>();
  return s;
}

json EventToJson(const RawEvent& ev) {
  return json{{"kind", ProbeKindName(ev.kind)}, {"ts_ns", ev.ts_ns}, {"pid", ev.pid},
              {"tid", ev.tid},   {"cpu", ev.cpu},  {"seq", ev.seq},
              {"payload", PayloadToJson(ev)}};
}

RawEvent EventFromJson(const json& j) {
  RawEvent ev;
  auto kind = ParseProbeKind(j.at("kind").get<std::string>());
  if (!kind) ParseFail("unknown kind '" + j.at("kind").get<std::string>() + "'");
  ev.kind = *kind;
  ev.ts_ns = j.at("ts_ns").get<int64_t>();
  ev.pid = j.at("pid").get<Pid>();
  ev.tid = j.at("tid").get<Tid>();
  ev.cpu = j.at("cpu").get<uint32_t>();
  ev.seq = j.at("seq").get<uint64_t>();
  ev.payload = PayloadFromJson(ev.kind, j.at("payload"));
  return ev;
}

json HeaderToJson(const SessionHeader& h) {
  json specs = json::array();
  for (const auto& s : h.pmc_specs) {
    specs.push_back({{"name", s.name}, {"scope", PmcScopeName(s.scope)},
                     {"unit", PmcUnitText(s.unit)}});
  }
  return json{
      {"v", kFormatVersion},
      {"flags", {{"str", h.flags.str}, {"pmc", h.flags.pmc}, {"perf_buffer", h.flags.perf_buffer}}},
      {"pmc_specs", std::move(specs)},
      {"inference_tids", h.inference_tids},
      {"qos_target_tps", h.qos_target_tps},
      {"nthreads", h.nthreads},
      {"backend_names", h.backend_names},
      {"experts_per_token", h.experts_per_token},
      {"lost_events", h.lost_events},
  };
}

SessionHeader HeaderFromJson(const json& j) {
  int version = j.value("v", 0);
  if (version != kFormatVersion) {
    ParseFail("unsupported session format version " + std::to_string(version));
  }
  SessionHeader h;
  const json& flags = j.at("flags");
  h.flags.str = flags.at("str").get<bool>();
  h.flags.pmc = flags.at("pmc").get<bool>();
  h.flags.perf_buffer = flags.at("perf_buffer").get<bool>();
  for (const auto& s : j.at("pmc_specs")) {
    PmcSpec spec;
    spec.name = s.at("name").get<std::string>();
    auto scope = ParsePmcScope(s.at("scope").get<std::string>());
    auto unit = ParsePmcUnit(s.at("unit").get<std::string>());
    if (!scope || !unit) ParseFail("bad pmc spec for '" + spec.name + "'");
    spec.scope = *scope;
    spec.unit = *unit;
    h.pmc_specs.push_back(std::move(spec));
  }
  h.inference_tids = j.at("inference_tids").get<std::set<Tid>>();
  h.qos_target_tps = j.at("qos_target_tps").get<double>();
  h.nthreads = j.at("nthreads").get<uint32_t>();
  h.backend_names = j.at("backend_names").get<std::map<std::string, std::string>>();
  h.experts_per_token = j.value("experts_per_token", 0u);
  h.lost_events = j.value("lost_events", uint64_t{0});
  return h;
}

// Binary event body. Optional fields are announced by a presence byte.
enum PresenceBits : uint8_t {
  kHasDims = 1 << 0,
  kHasSrcs = 1 << 1,
  kHasPmc = 1 << 2,
  kHasExperts = 1 << 3,
  kHasPrevTid = 1 << 4,
  kHasNextTid = 1 << 5,
  kHasPrevState = 1 << 6,
  kHasWakee = 1 << 7,
};

void PutEvent(internal::ByteWriter& w, const RawEvent& ev) {
  w.Put(static_cast<uint8_t>(ev.kind));
  w.Put(ev.ts_ns);
  w.Put(ev.pid);
  w.Put(ev.tid);
  w.Put(ev.cpu);
  w.Put(ev.seq);
  if (const auto* op = ev.op()) {
    uint8_t presence = (op->dims ? kHasDims : 0) | (op->src_addrs ? kHasSrcs : 0) |
                       (op->pmc ? kHasPmc : 0) | (op->expert_ids ? kHasExperts : 0);
    w.Put(presence);
    w.Put(op->op_addr);
    w.Put(static_cast<uint8_t>(op->op_type.kind()));
    w.Put(op->op_type.raw());
    w.PutString(op->op_name);
    w.Put(static_cast<uint8_t>(op->backend));
    if (op->dims) {
      for (int64_t d : *op->dims) w.Put(d);
    }
    if (op->src_addrs) {
      w.Put(static_cast<uint16_t>(op->src_addrs->size()));
      for (Addr a : *op->src_addrs) w.Put(a);
    }
    if (op->pmc) {
      w.Put(static_cast<uint16_t>(op->pmc->size()));
      for (uint64_t v : *op->pmc) w.Put(v);
    }
    if (op->expert_ids) {
      w.Put(static_cast<uint16_t>(op->expert_ids->size()));
      for (uint32_t e : *op->expert_ids) w.Put(e);
    }
  } else if (const auto* g = ev.graph()) {
    w.PutString(g->backend_guid);
  } else if (const auto* t = ev.token()) {
    w.Put(t->batch_size);
  } else if (const auto* s = ev.sched()) {
    uint8_t presence = (s->prev_tid ? kHasPrevTid : 0) | (s->next_tid ? kHasNextTid : 0) |
                       (s->prev_state ? kHasPrevState : 0) | (s->wakee_tid ? kHasWakee : 0);
    w.Put(presence);
    if (s->prev_tid) w.Put(*s->prev_tid);
    if (s->next_tid) w.Put(*s->next_tid);
    if (s->prev_state) w.Put(*s->prev_state);
    if (s->wakee_tid) w.Put(*s->wakee_tid);
  }
}

RawEvent GetEvent(internal::ByteReader& r) {
  RawEvent ev;
  uint8_t kind = r.Get<uint8_t>();
  if (kind > static_cast<uint8_t>(ProbeKind::kSchedWakeup)) {
    throw Error(ErrorCode::kStream, "bad event kind " + std::to_string(kind) +
                                        " at byte offset " + std::to_string(r.offset() - 1));
  }
  ev.kind = static_cast<ProbeKind>(kind);
  ev.ts_ns = r.Get<int64_t>();
  ev.pid = r.Get<Pid>();
  ev.tid = r.Get<Tid>();
  ev.cpu = r.Get<uint32_t>();
  ev.seq = r.Get<uint64_t>();
  if (IsOpKind(ev.kind)) {
    OpPayload op;
    uint8_t presence = r.Get<uint8_t>();
    op.op_addr = r.Get<Addr>();
    auto op_kind = static_cast<OpKind>(r.Get<uint8_t>());
    int64_t raw = r.Get<int64_t>();
    op.op_type = op_kind == OpKind::kUnknown ? OpType::Unknown(raw) : OpType(op_kind);
    op.op_name = r.GetString();
    op.backend = static_cast<Backend>(r.Get<uint8_t>());
    if (presence & kHasDims) {
      Dims d;
      for (auto& x : d) x = r.Get<int64_t>();
      op.dims = d;
    }
    if (presence & kHasSrcs) {
      std::vector<Addr> srcs(r.Get<uint16_t>());
      for (auto& a : srcs) a = r.Get<Addr>();
      op.src_addrs = std::move(srcs);
    }
    if (presence & kHasPmc) {
      std::vector<uint64_t> pmc(r.Get<uint16_t>());
      for (auto& v : pmc) v = r.Get<uint64_t>();
      op.pmc = std::move(pmc);
    }
    if (presence & kHasExperts) {
      std::vector<uint32_t> ids(r.Get<uint16_t>());
      for (auto& e : ids) e = r.Get<uint32_t>();
      op.expert_ids = std::move(ids);
    }
    ev.payload = std::move(op);
  } else if (IsGraphKind(ev.kind)) {
    ev.payload = GraphPayload{r.GetString()};
  } else if (IsTokenKind(ev.kind)) {
    ev.payload = TokenPayload{r.Get<uint32_t>()};
  } else {
    SchedPayload s;
    uint8_t presence = r.Get<uint8_t>();
    if (presence & kHasPrevTid) s.prev_tid = r.Get<Tid>();
    if (presence & kHasNextTid) s.next_tid = r.Get<Tid>();
    if (presence & kHasPrevState) s.prev_state = r.Get<int64_t>();
    if (presence & kHasWakee) s.wakee_tid = r.Get<Tid>();
    ev.payload = s;
  }
  return ev;
}

void PutHeader(internal::ByteWriter& w, const SessionHeader& h) {
  w.Put(static_cast<uint8_t>((h.flags.str ? 1 : 0) | (h.flags.pmc ? 2 : 0) |
                             (h.flags.perf_buffer ? 4 : 0)));
  w.Put(static_cast<uint16_t>(h.pmc_specs.size()));
  for (const auto& s : h.pmc_specs) {
    w.PutString(s.name);
    w.Put(static_cast<uint8_t>(s.scope));
    w.Put(static_cast<uint8_t>(s.unit.kind));
    w.Put(s.unit.multiplier);
  }
  w.Put(static_cast<uint32_t>(h.inference_tids.size()));
  for (Tid t : h.inference_tids) w.Put(t);
  w.PutDouble(h.qos_target_tps);
  w.Put(h.nthreads);
  w.Put(static_cast<uint32_t>(h.backend_names.size()));
  for (const auto& [guid, label] : h.backend_names) {
    w.PutString(guid);
    w.PutString(label);
  }
  w.Put(h.experts_per_token);
  w.Put(h.lost_events);
}

SessionHeader GetHeader(internal::ByteReader& r) {
  SessionHeader h;
  uint8_t flags = r.Get<uint8_t>();
  h.flags = {(flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0};
  uint16_t nspecs = r.Get<uint16_t>();
  for (uint16_t i = 0; i < nspecs; ++i) {
    PmcSpec s;
    s.name = r.GetString();
    s.scope = static_cast<PmcScope>(r.Get<uint8_t>());
    s.unit.kind = static_cast<PmcUnitKind>(r.Get<uint8_t>());
    s.unit.multiplier = r.Get<uint64_t>();
    h.pmc_specs.push_back(std::move(s));
  }
  uint32_t ntids = r.Get<uint32_t>();
  for (uint32_t i = 0; i < ntids; ++i) h.inference_tids.insert(r.Get<Tid>());
  h.qos_target_tps = r.GetDouble();
  h.nthreads = r.Get<uint32_t>();
  uint32_t nnames = r.Get<uint32_t>();
  for (uint32_t i = 0; i < nnames; ++i) {
    std::string guid = r.GetString();
    h.backend_names[guid] = r.GetString();
  }
  h.experts_per_token = r.Get<uint32_t>();
  h.lost_events = r.Get<uint64_t>();
  return h;
}

void PutFrame(internal::ByteWriter& out, std::string_view body) {
  out.Put(static_cast<uint32_t>(body.size()));
  out.PutBytes(body);
}

}  // namespace

std::string AddrToHex(Addr addr) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(addr));
  return buf;
}

std::string EncodeSessionJsonl(const TraceSession& session) {
  std::string out = json{{kHeaderKey, HeaderToJson(session.header)}}.dump();
  out.push_back('\n');
  for (const auto& ev : session.events) {
    out += EventToJson(ev).dump();
    out.push_back('\n');
  }
  return out;
}

TraceSession DecodeSessionJsonl(std::string_view text) {
  TraceSession session;
  bool have_header = false;
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      json j = json::parse(line);
      if (!have_header) {
        if (!j.contains(kHeaderKey)) ParseFail("first line must carry profinfer_header");
        session.header = HeaderFromJson(j.at(kHeaderKey));
        have_header = true;
      } else {
        session.events.push_back(EventFromJson(j));
      }
    } catch (const json::exception& e) {
      ParseFail("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      ParseFail("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) ParseFail("empty session file");
  return session;
}

std::string EncodeSessionBinary(const TraceSession& session) {
  internal::ByteWriter out;
  out.PutBytes(kBinaryMagic);
  out.Put(static_cast<uint8_t>(kFormatVersion));
  internal::ByteWriter header;
  PutHeader(header, session.header);
  PutFrame(out, header.data());
  for (const auto& ev : session.events) {
    internal::ByteWriter body;
    PutEvent(body, ev);
    PutFrame(out, body.data());
  }
  return out.Take();
}

TraceSession DecodeSessionBinary(std::string_view bytes) {
  internal::ByteReader r(bytes);
  if (r.GetBytes(kBinaryMagic.size()) != kBinaryMagic) {
    throw Error(ErrorCode::kParse, "not a binary session (bad magic)");
  }
  uint8_t version = r.Get<uint8_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParse, "unsupported session format version " + std::to_string(version));
  }
  TraceSession session;
  bool have_header = false;
  while (!r.done()) {
    size_t frame_offset = r.offset();
    uint32_t len = r.Get<uint32_t>();
    internal::ByteReader body(r.GetBytes(len), r.offset() - len);
    if (!have_header) {
      session.header = GetHeader(body);
      have_header = true;
    } else {
      session.events.push_back(GetEvent(body));
    }
    if (!body.done()) {
      throw Error(ErrorCode::kStream,
                  "frame at byte offset " + std::to_string(frame_offset) + " has trailing bytes");
    }
  }
  if (!have_header) throw Error(ErrorCode::kParse, "binary session without header frame");
  return session;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to '" + path.string() + "'");
}

void WriteSessionFile(const std::filesystem::path& path, const TraceSession& session) {
  if (path.extension() == ".bin") {
    WriteFileBytes(path, EncodeSessionBinary(session));
  } else {
    WriteFileBytes(path, EncodeSessionJsonl(session));
  }
}

TraceSession ReadSessionFile(const std::filesystem::path& path) {
  std::string bytes = ReadFileBytes(path);
  if (std::string_view(bytes).substr(0, kBinaryMagic.size()) == kBinaryMagic) {
    return DecodeSessionBinary(bytes);
  }
  return DecodeSessionJsonl(bytes);
}

}  // namespace profinfer
