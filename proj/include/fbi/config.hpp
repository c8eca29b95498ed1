/* Copyright 2026 The fbi Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Flat `key = value` configuration files. `#` starts a comment; blank lines
// are skipped; a key may appear once.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fbi/errors.hpp"

namespace fbi {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in) {
    Config c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view v = line;
      if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
      v = detail::trim(v);
      if (v.empty()) continue;
      const auto eq = v.find('=');
      if (eq == std::string_view::npos) {
        throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      const std::string key(detail::trim(v.substr(0, eq)));
      const std::string value(detail::trim(v.substr(eq + 1)));
      if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
      if (!c.values_.emplace(key, value).second) {
        throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      }
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::optional<std::string> find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? to_double(key, *v) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = find(key);
    return v ? to_u64(key, *v) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + *v + "'");
  }

  // Comma-separated list; empty items are dropped.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    return split_list(*v);
  }

  // Rejects keys outside `known`, so typos do not pass silently.
  void check_keys(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
      if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
  }

  static std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
      const auto comma = s.find(',', start);
      const auto end = comma == std::string_view::npos ? s.size() : comma;
      auto item = detail::trim(s.substr(start, end - start));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
    return d;
  }

  static std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Seed precedence: explicit value, then the FBI_SEED environment variable,
// then `fallback`.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> explicit_seed, std::uint64_t fallback) {
  if (explicit_seed) return *explicit_seed;
  if (const char* env = std::getenv("FBI_SEED"); env && *env) return Config::to_u64("FBI_SEED", env);
  return fallback;
}

}  // namespace fbi
