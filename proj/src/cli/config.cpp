#include "recseg/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "recseg/core/error.hpp"

namespace recseg {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("key '" + key + "' expects " + expected + ", got '" +
                    value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    bad_value(key, value, "a number");
  return out;
}

}  // namespace

std::string KeyValueConfig::normalize_key(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = normalize_key(trim(line.substr(0, eq)));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[normalize_key(key)] = value;
}

bool KeyValueConfig::contains(const std::string& key) const {
  return values_.count(normalize_key(key)) != 0;
}

const std::string* KeyValueConfig::find(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  const std::string* v = find(normalize_key(key));
  return v ? *v : fallback;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) {
  const std::string* v = find(normalize_key(key));
  if (!v) return fallback;
  const std::string t = trim(*v);
  int out = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    bad_value(key, *v, "an integer");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) {
  const std::string* v = find(normalize_key(key));
  if (!v) return fallback;
  const std::string t = trim(*v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    bad_value(key, *v, "an unsigned integer");
  return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const std::string* v = find(normalize_key(key));
  if (!v) return fallback;
  return parse_double(key, *v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const std::string* v = find(normalize_key(key));
  if (!v) return fallback;
  std::string t = trim(*v);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, *v, "a boolean");
}

std::vector<double> KeyValueConfig::get_doubles(
    const std::string& key, const std::vector<double>& fallback) {
  const std::string* v = find(normalize_key(key));
  if (!v) return fallback;
  std::vector<double> out;
  std::stringstream ss(*v);
  std::string part;
  while (std::getline(ss, part, ','))
    out.push_back(parse_double(key, part));
  if (out.empty()) bad_value(key, *v, "comma-separated numbers");
  return out;
}

std::string KeyValueConfig::require_string(const std::string& key) {
  const std::string* v = find(normalize_key(key));
  if (!v) throw ConfigError("missing required key '" + key + "'");
  return *v;
}

void KeyValueConfig::finish() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (consumed_.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

}  // namespace recseg
