#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace rmae {

// Flat string key-value configuration. Keys mirror CLI flag names
// (underscored); precedence flag > config file > default is realized by
// the caller setting in that order.
class Config {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // "key = value" lines; '#' starts a comment; blank lines ignored.
  void load_file(const std::string& path);

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string render() const;  // one "key = value" line per entry, sorted

  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace rmae
