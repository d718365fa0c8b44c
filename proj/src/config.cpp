#include "capgen/config.hpp"

#include <fstream>
#include <sstream>

namespace capgen {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      cfg.set_pair(t);
    } catch (const ConfigError& e) {
      throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void Config::set_pair(const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + kv + "'");
  values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

std::string Config::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + it->second + "'");
  }
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    long long v = std::stoll(it->second, &used);
    if (used != it->second.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a nonnegative integer: '" + it->second +
                      "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a bool: '" + it->second + "'");
}

std::vector<unsigned> Config::get_seed_list(const std::string& key,
                                            const std::vector<unsigned>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<unsigned> seeds;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      seeds.push_back(static_cast<unsigned>(std::stoul(part)));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' has a non-integer seed: '" + part + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("config key '" + key + "' lists no seeds");
  return seeds;
}

std::string Config::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
  return out.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path);
  out << serialize();
}

}  // namespace capgen
