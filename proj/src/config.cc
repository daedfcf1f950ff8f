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

#include "profinfer/config.h"

#include <charconv>
#include <cstdlib>

#include "profinfer/error.h"
#include "profinfer/session_io.h"

namespace profinfer {

namespace {

std::string_view Trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment, ignoring '#' inside quotes.
std::string_view StripComment(std::string_view line) {
  bool in_quote = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

[[noreturn]] void Fail(size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": " + msg);
}

ConfigValue::Scalar ParseScalar(std::string_view v, size_t line_no) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v == "true") return true;
  if (v == "false") return false;
  int64_t i = 0;
  auto [iptr, iec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (iec == std::errc() && iptr == v.data() + v.size()) return i;
  // from_chars for double is missing in libstdc++ 11.
  std::string tmp(v);
  char* end = nullptr;
  double d = std::strtod(tmp.c_str(), &end);
  if (!tmp.empty() && end == tmp.c_str() + tmp.size()) return d;
  Fail(line_no, "cannot parse value '" + tmp + "'");
}

std::vector<std::string_view> SplitArray(std::string_view body) {
  std::vector<std::string_view> out;
  bool in_quote = false;
  size_t start = 0;
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '"') in_quote = !in_quote;
    if (body[i] == ',' && !in_quote) {
      out.push_back(Trim(body.substr(start, i - start)));
      start = i + 1;
    }
  }
  std::string_view last = Trim(body.substr(start));
  if (!last.empty()) out.push_back(last);
  return out;
}

std::string ScalarToString(const ConfigValue::Scalar& s) {
  if (const auto* str = std::get_if<std::string>(&s)) return *str;
  if (const auto* b = std::get_if<bool>(&s)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<int64_t>(&s)) return std::to_string(*i);
  return std::to_string(std::get<double>(s));
}

}  // namespace

ConfigTable ConfigTable::Parse(std::string_view text) {
  ConfigTable table;
  std::string section;
  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = Trim(StripComment(text.substr(start, end - start)));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') Fail(line_no, "unterminated section header");
      section = std::string(Trim(line.substr(1, line.size() - 2)));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string_view::npos) Fail(line_no, "expected key = value");
    std::string_view key = Trim(line.substr(0, eq));
    std::string_view raw = Trim(line.substr(eq + 1));
    if (key.empty()) Fail(line_no, "empty key");
    if (raw.empty()) Fail(line_no, "missing value for '" + std::string(key) + "'");
    ConfigValue value;
    if (raw.front() == '[') {
      if (raw.back() != ']') Fail(line_no, "unterminated array");
      std::vector<ConfigValue::Scalar> items;
      for (std::string_view item : SplitArray(raw.substr(1, raw.size() - 2))) {
        items.push_back(ParseScalar(item, line_no));
      }
      value.value = std::move(items);
    } else {
      std::visit([&](auto&& s) { value.value = s; }, ParseScalar(raw, line_no));
    }
    std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    table.entries_[full] = std::move(value);
  }
  return table;
}

ConfigTable ConfigTable::Load(const std::string& path) {
  try {
    return Parse(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw Error(ErrorCode::kConfig, e.what());
    throw Error(e.code(), path + ": " + e.what());
  }
}

const ConfigValue* ConfigTable::Find(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool ConfigTable::Has(std::string_view key) const { return Find(key) != nullptr; }

bool ConfigTable::GetBool(std::string_view key, bool fallback) const {
  const ConfigValue* v = Find(key);
  if (!v) return fallback;
  if (const auto* b = std::get_if<bool>(&v->value)) return *b;
  throw Error(ErrorCode::kConfig, "'" + std::string(key) + "' must be a boolean");
}

int64_t ConfigTable::GetInt(std::string_view key, int64_t fallback) const {
  const ConfigValue* v = Find(key);
  if (!v) return fallback;
  if (const auto* i = std::get_if<int64_t>(&v->value)) return *i;
  throw Error(ErrorCode::kConfig, "'" + std::string(key) + "' must be an integer");
}

double ConfigTable::GetDouble(std::string_view key, double fallback) const {
  const ConfigValue* v = Find(key);
  if (!v) return fallback;
  if (const auto* d = std::get_if<double>(&v->value)) return *d;
  if (const auto* i = std::get_if<int64_t>(&v->value)) return static_cast<double>(*i);
  throw Error(ErrorCode::kConfig, "'" + std::string(key) + "' must be a number");
}

std::string ConfigTable::GetString(std::string_view key, std::string_view fallback) const {
  const ConfigValue* v = Find(key);
  if (!v) return std::string(fallback);
  if (const auto* s = std::get_if<std::string>(&v->value)) return *s;
  throw Error(ErrorCode::kConfig, "'" + std::string(key) + "' must be a string");
}

std::vector<std::string> ConfigTable::GetStringList(std::string_view key) const {
  const ConfigValue* v = Find(key);
  if (!v) return {};
  std::vector<std::string> out;
  if (const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&v->value)) {
    for (const auto& s : *arr) out.push_back(ScalarToString(s));
    return out;
  }
  if (const auto* s = std::get_if<std::string>(&v->value)) {
    for (std::string_view item : SplitArray(*s)) {
      if (!item.empty()) out.emplace_back(item);
    }
    return out;
  }
  throw Error(ErrorCode::kConfig, "'" + std::string(key) + "' must be a list of strings");
}

}  // namespace profinfer
