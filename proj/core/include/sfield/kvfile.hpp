#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sfield {

// Line-oriented key-value text file. Each non-empty line holds a key followed
// by whitespace-separated values; '#' starts a comment. Repeated keys append
// (used for scene primitives).
struct KvFile {
  struct Entry {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Entry> entries;

  static KvFile parse(const std::filesystem::path& path);
  static KvFile parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  // Single-valued accessors; throw std::runtime_error naming the key when
  // missing (no default) or malformed.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  std::vector<const Entry*> all(const std::string& key) const;
};

}  // namespace sfield
