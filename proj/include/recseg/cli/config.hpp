#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace recseg {

// Flat key-value run configuration. Keys come from an optional plain-text
// file (`key = value` per line, `#` comments) plus `--key value` command
// line overrides; overrides win. Getters record which keys a command
// consumed, and finish() rejects anything left over, so misspelled or
// misplaced keys are fatal instead of silently ignored. Hyphens in keys
// normalize to underscores.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);

  // Override (or introduce) one key.
  void set(const std::string& key, const std::string& value);

  bool contains(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  // Comma-separated doubles.
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback);

  // Missing-key-fatal variant for paths a command cannot default.
  std::string require_string(const std::string& key);

  // Throws ConfigError naming every key no getter consumed.
  void finish() const;

  static std::string normalize_key(const std::string& key);

 private:
  const std::string* find(const std::string& key);

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace recseg
