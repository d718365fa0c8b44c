#pragma once

#include <map>
#include <string>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

// Flat key=value configuration with dotted namespaces (decode.beam_size=4).
// Later assignments win, so file values can be overridden by --set flags.
class Config {
 public:
  static Config load(const std::string& path);

  void set_pair(const std::string& key_equals_value);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<unsigned> get_seed_list(const std::string& key,
                                      const std::vector<unsigned>& fallback) const;

  // Sorted key=value lines; reloading them reproduces this object.
  std::string serialize() const;
  void save(const std::string& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace capgen
