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

#ifndef PROFINFER_CONFIG_H_
#define PROFINFER_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace profinfer {

// Scalar or flat-array value from a key/value config file.
struct ConfigValue {
  using Scalar = std::variant<bool, int64_t, double, std::string>;
  std::variant<bool, int64_t, double, std::string, std::vector<Scalar>> value;
};

// A small TOML subset: `[section]` headers, `key = value` lines, `#`
// comments, and values that are quoted strings, integers, floats, booleans,
// or single-line arrays of those. Keys are stored fully qualified
// ("qos.target_tps").
class ConfigTable {
 public:
  static ConfigTable Parse(std::string_view text);
  static ConfigTable Load(const std::string& path);

  bool Has(std::string_view key) const;
  bool GetBool(std::string_view key, bool fallback) const;
  int64_t GetInt(std::string_view key, int64_t fallback) const;
  double GetDouble(std::string_view key, double fallback) const;
  std::string GetString(std::string_view key, std::string_view fallback) const;
  // A scalar string is accepted as a comma-separated list.
  std::vector<std::string> GetStringList(std::string_view key) const;

  const std::map<std::string, ConfigValue, std::less<>>& entries() const { return entries_; }
  void Set(std::string key, ConfigValue value) { entries_[std::move(key)] = std::move(value); }

 private:
  const ConfigValue* Find(std::string_view key) const;

  std::map<std::string, ConfigValue, std::less<>> entries_;
};

}  // namespace profinfer

#endif  // PROFINFER_CONFIG_H_
