#pragma once

// Tiny key = value config reader with [section] headers. Keys are
// flattened to "section.key". Lines starting with # are comments.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dirt {

class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str(), path);
  }

  static Config from_string(const std::string& text,
                            const std::string& origin = "<string>") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[' && s.back() == ']') {
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      c.values_[section.empty() ? key : section + "." + key] = val;
    }
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw std::invalid_argument("config: missing required key '" + key + "'");
    return it->second;
  }

  long get_long(const std::string& key, long fallback) const {
    return has(key) ? std::stol(values_.at(key)) : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? std::stod(values_.at(key)) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
  }

  std::vector<long> get_longs(const std::string& key) const {
    std::vector<long> out;
    if (!has(key)) return out;
    std::istringstream ss(values_.at(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stol(trim(tok)));
    return out;
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical serialization (sorted keys) used for hashing and manifests.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

/// FNV-1a hash of the canonical config text.
inline std::string config_hash(const Config& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : c.canonical()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dirt
