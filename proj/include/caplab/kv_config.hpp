#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace caplab {

// Plain-text "key = value" settings; '#' starts a comment. Keys outside the
// allowed set are rejected.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::set<std::string>& allowed,
                              const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path,
                             const std::set<std::string>& allowed);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

bool parse_bool(const std::string& text);

}  // namespace caplab
