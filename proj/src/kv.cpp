#include "poselift/kv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "poselift/error.hpp"

namespace poselift {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_words(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(std::string_view text, const std::string& source) {
  KeyValueDoc doc;
  doc.source_ = source;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(source + ":" + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    doc.entries_[key] = trim(line.substr(eq + 1));
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueDoc::merge(const KeyValueDoc& overlay) {
  for (const auto& [k, v] : overlay.entries_) entries_[k] = v;
}

void KeyValueDoc::set(const std::string& key, const std::string& value) { entries_[key] = value; }

const std::string& KeyValueDoc::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(source_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValueDoc::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

long long KeyValueDoc::get_int(const std::string& key) const {
  const auto& v = get(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(source_ + ": key '" + key + "' is not an integer: " + v);
  return out;
}

long long KeyValueDoc::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KeyValueDoc::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not a number: " + v);
  }
}

double KeyValueDoc::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KeyValueDoc::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(source_ + ": key '" + key + "' is not a boolean: " + v);
}

std::vector<long long> KeyValueDoc::get_int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const auto& w : split_words(get(key))) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size())
      throw ConfigError(source_ + ": key '" + key + "' has a non-integer entry: " + w);
    out.push_back(v);
  }
  return out;
}

std::vector<double> KeyValueDoc::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& w : split_words(get(key))) {
    try {
      out.push_back(std::stod(w));
    } catch (const std::exception&) {
      throw ConfigError(source_ + ": key '" + key + "' has a non-numeric entry: " + w);
    }
  }
  return out;
}

std::vector<std::string> KeyValueDoc::get_word_list(const std::string& key) const {
  return split_words(get(key));
}

std::string KeyValueDoc::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

void KeyValueDoc::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize();
}

std::string KeyValueDoc::format_value(double v) {
  // Shortest representation that round-trips.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace poselift
