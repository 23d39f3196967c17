#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prodcat/textnorm.hpp"

namespace prodcat::config {

// Flat `key = value` configuration file, UTF-8, '#' comments. Flags given on
// the command line override file values by calling set() after load.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::filesystem::path& path);
  static KeyValueConfig parse(std::string_view text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, std::string fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  void set(const std::string& key, std::string value);

  // Semantic checks for known keys; throws DataError naming the offending
  // key. Called by every CLI command after load.
  void validate() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Builds a normalizer config from `norm.min_token_len`, `norm.units`,
// `norm.keep_chars` (defaults apply when absent).
textnorm::NormalizerConfig norm_config_from(const KeyValueConfig& cfg);

}  // namespace prodcat::config
