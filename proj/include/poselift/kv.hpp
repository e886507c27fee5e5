#pragma once

// Layered `key = value` documents used for topology files, run configs and
// metric reports. `[section]` headers prefix following keys with "section.".

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace poselift {

class KeyValueDoc {
 public:
  static KeyValueDoc parse(std::string_view text, const std::string& source = "<string>");
  static KeyValueDoc load(const std::filesystem::path& path);

  // Keys present in `overlay` replace ours.
  void merge(const KeyValueDoc& overlay);
  void set(const std::string& key, const std::string& value);
  template <class T>
  void set_value(const std::string& key, const T& value) {
    set(key, format_value(value));
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<long long> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_word_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Sorted by key; parse(serialize()) reproduces the document.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  static std::string format_value(double v);
  static std::string format_value(long long v) { return std::to_string(v); }
  static std::string format_value(int v) { return std::to_string(v); }
  static std::string format_value(std::size_t v) { return std::to_string(v); }
  static std::string format_value(bool v) { return v ? "true" : "false"; }
  static std::string format_value(const std::string& v) { return v; }
  static std::string format_value(const char* v) { return v; }

 private:
  std::map<std::string, std::string> entries_;
  std::string source_ = "<string>";
};

}  // namespace poselift
