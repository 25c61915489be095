#pragma once

// Flat "key = value" configuration files. Lines starting with '#' are comments.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace futuregan::config {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  /// Keys present here that are neither listed in `known` nor match one of `prefixes`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known,
                                        const std::vector<std::string>& prefixes = {}) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace futuregan::config
