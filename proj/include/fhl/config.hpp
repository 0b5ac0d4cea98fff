#pragma once

// Line-oriented "key = value" files with [section] headers. '#' starts a
// comment anywhere, ';' only at the start of a line. Every key must appear in
// the schema handed to the parser.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fhl/common.hpp"

namespace fhl {

using ConfigSchema = std::map<std::string, std::set<std::string>>;

class Config {
 public:
  static Config parse(std::istream& in, const ConfigSchema& schema, const std::string& origin = "<config>") {
    Config cfg;
    std::string line;
    std::string section;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
      throw ConfigurationError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty() || line.front() == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail("malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (!schema.count(section)) fail("unknown section [" + section + "]");
        cfg.sections_.insert(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) fail("empty key");
      if (section.empty()) fail("key '" + key + "' outside any section");
      if (!schema.at(section).count(key)) fail("unknown key '" + key + "' in [" + section + "]");
      if (!cfg.values_.emplace(section + "." + key, value).second) fail("duplicate key '" + key + "'");
    }
    return cfg;
  }

  static Config load(const std::string& path, const ConfigSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file " + path);
    return parse(in, schema, path);
  }

  bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
  bool has(const std::string& s, const std::string& k) const { return values_.count(s + "." + k) > 0; }

  std::string get(const std::string& s, const std::string& k, const std::string& fallback) const {
    auto it = values_.find(s + "." + k);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require(const std::string& s, const std::string& k) const {
    auto it = values_.find(s + "." + k);
    if (it == values_.end()) throw ConfigurationError("missing key '" + k + "' in [" + s + "]");
    return it->second;
  }
  double get_double(const std::string& s, const std::string& k, double fallback) const {
    return has(s, k) ? to_double(require(s, k), s + "." + k) : fallback;
  }
  long get_int(const std::string& s, const std::string& k, long fallback) const {
    if (!has(s, k)) return fallback;
    const auto v = require(s, k);
    std::size_t pos = 0;
    long out = 0;
    try {
      out = std::stol(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigurationError("not an integer: " + s + "." + k + " = " + v);
    return out;
  }
  bool get_bool(const std::string& s, const std::string& k, bool fallback) const {
    if (!has(s, k)) return fallback;
    const auto v = require(s, k);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigurationError("not a boolean: " + s + "." + k + " = " + v);
  }
  /// Comma-separated numbers.
  std::vector<double> get_list(const std::string& s, const std::string& k, std::vector<double> fallback) const {
    if (!has(s, k)) return fallback;
    std::vector<double> out;
    for (const auto& tok : split(require(s, k), ',')) out.push_back(to_double(tok, s + "." + k));
    return out;
  }
  /// Semicolon-separated "x,y" pairs.
  std::vector<Vec2> get_vectors(const std::string& s, const std::string& k, std::vector<Vec2> fallback) const {
    if (!has(s, k)) return fallback;
    std::vector<Vec2> out;
    for (const auto& pair : split(require(s, k), ';')) {
      const auto xy = split(pair, ',');
      if (xy.size() != 2) throw ConfigurationError("expected x,y pairs in " + s + "." + k);
      out.push_back({to_double(xy[0], s + "." + k), to_double(xy[1], s + "." + k)});
    }
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }
  static double to_double(const std::string& v, const std::string& what) {
    std::size_t pos = 0;
    double out = 0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigurationError("not a number: " + what + " = " + v);
    return out;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> sections_;
};

}  // namespace fhl
