#pragma once

// Plain key-value text used by configs, parameter files and reports:
//
//   # comment
//   [section]
//   key = value
//
// Keys before the first section header belong to the unnamed section "".
// Order is preserved so written files are byte-stable.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ahcq/error.hpp"

namespace ahcq::kv {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw FormatError("cannot format number");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw FormatError("malformed number '" + std::string(s) + "' for key '" + std::string(what) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw FormatError("malformed integer '" + std::string(s) + "' for key '" + std::string(what) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw FormatError("malformed unsigned integer '" + std::string(s) + "' for key '" +
                      std::string(what) + "'");
  return v;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Section {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& at(std::string_view key) const {
    if (const auto* v = find(key)) return *v;
    throw FormatError("missing key '" + std::string(key) + "' in section [" + name + "]");
  }

  Section& set(std::string key, std::string value) {
    for (auto& [k, v] : entries)
      if (k == key) {
        v = std::move(value);
        return *this;
      }
    entries.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  Section& set(std::string key, double value) { return set(std::move(key), format_double(value)); }
  Section& set(std::string key, std::int64_t value) {
    return set(std::move(key), std::to_string(value));
  }
  Section& set(std::string key, int value) { return set(std::move(key), std::to_string(value)); }
  Section& set(std::string key, std::size_t value) {
    return set(std::move(key), std::to_string(value));
  }
  Section& set(std::string key, const char* value) { return set(std::move(key), std::string(value)); }

  double number(std::string_view key) const { return parse_double(at(key), key); }
  std::int64_t integer(std::string_view key) const { return parse_int(at(key), key); }
};

struct Document {
  std::vector<Section> sections;

  const Section* find(std::string_view name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }

  const Section& at(std::string_view name) const {
    if (const auto* s = find(name)) return *s;
    throw FormatError("missing section [" + std::string(name) + "]");
  }

  Section& add(std::string name) {
    sections.push_back(Section{std::move(name), {}});
    return sections.back();
  }

  Section& get_or_add(std::string_view name) {
    for (auto& s : sections)
      if (s.name == name) return s;
    return add(std::string(name));
  }

  std::string str() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& s : sections) {
      if (!s.name.empty()) {
        if (!first) out << '\n';
        out << '[' << s.name << "]\n";
      }
      for (const auto& [k, v] : s.entries) out << k << " = " << v << '\n';
      first = false;
    }
    return out.str();
  }
};

inline Document parse(std::string_view text) {
  Document doc;
  Section* current = nullptr;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw FormatError("line " + std::to_string(line_no) + ": unterminated section header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      if (doc.find(name))
        throw FormatError("line " + std::to_string(line_no) + ": duplicate section [" + name + "]");
      current = &doc.add(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("line " + std::to_string(line_no) + ": expected 'key = value'");
    if (!current) current = &doc.add("");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
    if (current->find(key))
      throw FormatError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    current->entries.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << text;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != ',') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

}  // namespace ahcq::kv
