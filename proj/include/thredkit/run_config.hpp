#ifndef THREDKIT_RUN_CONFIG_HPP
#define THREDKIT_RUN_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "thredkit/error.hpp"

namespace thredkit {

/// Flat `key = value` settings. Keys outside the allowed set are rejected;
/// later assignments override earlier ones.
class RunConfig {
 public:
  explicit RunConfig(std::set<std::string> allowed) : allowed_(std::move(allowed)) {}

  void set(const std::string& key, std::string value) {
    if (!allowed_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }

  /// Parses `key = value` lines; '#' starts a comment.
  void merge(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path + "'");
    merge(in, path);
  }

  /// Parses a `key=value` override.
  void set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    set(trim(std::string(assignment.substr(0, eq))), trim(std::string(assignment.substr(eq + 1))));
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    try {
      std::size_t pos = 0;
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      const auto r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    try {
      std::size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Sorted `key = value` lines.
  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config file '" + path + "'");
    out << dump();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::set<std::string> allowed_;
  std::map<std::string, std::string> values_;
};

}  // namespace thredkit

#endif  // THREDKIT_RUN_CONFIG_HPP
