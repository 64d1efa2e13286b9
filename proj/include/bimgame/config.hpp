#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bimgame {

// Flat `key = value` configuration. Lines starting with '#' are comments;
// later assignments override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const KeyValueConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  // Keys with the given prefix, prefix stripped.
  KeyValueConfig subset(const std::string& prefix) const;

  // Canonical serialization: sorted `key = value` lines.
  std::string to_string() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Shortest text that parses back to the same double.
std::string format_double(double v);

// FNV-1a over the bytes of `text`, hex encoded.
std::string content_hash(const std::string& text);

}  // namespace bimgame
