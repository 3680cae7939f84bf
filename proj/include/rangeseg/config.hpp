// Copyright (c) 2026 The rangeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Flat `key = value` configuration text. '#' starts a comment, blank lines
// are skipped, keys are unique, order of first insertion is kept on output.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"

namespace rangeseg
{

class KeyValueConfig
{
public:
  static KeyValueConfig parse(const std::string & text, const std::string & origin = "<config>")
  {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) {
        line.erase(hash);
      }
      line = trim(line);
      if (line.empty()) {
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      }
      if (cfg.has(key)) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      }
      cfg.set(key, value);
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path & path)
  {
    std::ifstream in(path);
    if (!in) {
      throw IoError("cannot open config '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string & key) const {return values_.contains(key);}

  void set(const std::string & key, const std::string & value)
  {
    if (!has(key)) {
      order_.push_back(key);
    }
    values_[key] = value;
  }

  const std::string & get(const std::string & key) const
  {
    const auto it = values_.find(key);
    if (it == values_.end()) {
      throw ConfigError("missing config key '" + key + "'");
    }
    return it->second;
  }

  std::string get_or(const std::string & key, const std::string & fallback) const
  {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string & key) const
  {
    const std::string & s = get(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) {
        return v;
      }
    } catch (const std::exception &) {
    }
    throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  }

  long long get_int(const std::string & key) const
  {
    const std::string & s = get(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
    }
    return v;
  }

  bool get_bool(const std::string & key) const
  {
    const std::string & s = get(key);
    if (s == "true" || s == "1" || s == "on" || s == "yes") {
      return true;
    }
    if (s == "false" || s == "0" || s == "off" || s == "no") {
      return false;
    }
    throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
  }

  /// Entries of `over` replace or extend this config.
  void merge(const KeyValueConfig & over)
  {
    for (const auto & k : over.order_) {
      set(k, over.get(k));
    }
  }

  const std::vector<std::string> & keys() const {return order_;}

  std::string to_string() const
  {
    std::string out;
    for (const auto & k : order_) {
      out += k + " = " + values_.at(k) + "\n";
    }
    return out;
  }

  void save(const std::filesystem::path & path) const
  {
    std::ofstream out(path);
    out << to_string();
    if (!out) {
      throw IoError("cannot write config '" + path.string() + "'");
    }
  }

  friend bool operator==(const KeyValueConfig & a, const KeyValueConfig & b)
  {
    return a.values_ == b.values_;
  }

private:
  static std::string trim(const std::string & s)
  {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
      return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace rangeseg
