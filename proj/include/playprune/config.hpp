#ifndef PLAYPRUNE_CONFIG_HPP
#define PLAYPRUNE_CONFIG_HPP

// Flat key-value configuration documents with [section] headers.
//
//   # comment
//   [section]
//   key = value
//   key = value        ; repeated keys keep their order
//
// Keys before the first header live in the unnamed section "".

#include "error.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace playprune {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string tok;
  while (is >> tok)
    out.push_back(tok);
  return out;
}

} // namespace detail

inline double parse_double(const std::string &field, const std::string &text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size())
      return v;
  } catch (const std::exception &) {
  }
  detail::fail("config field '", field, "': expected a number, got '", text,
               "'");
}

inline std::int64_t parse_int(const std::string &field,
                              const std::string &text) {
  std::int64_t v = 0;
  const auto *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  PLAYPRUNE_CHECK(ec == std::errc() && ptr == end && !text.empty(),
                  "config field '", field, "': expected an integer, got '",
                  text, "'");
  return v;
}

inline std::size_t parse_size(const std::string &field,
                              const std::string &text) {
  const auto v = parse_int(field, text);
  PLAYPRUNE_CHECK(v >= 0, "config field '", field,
                  "': expected a non-negative integer, got ", v);
  return static_cast<std::size_t>(v);
}

inline bool parse_bool(const std::string &field, const std::string &text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on")
    return true;
  if (text == "0" || text == "false" || text == "no" || text == "off")
    return false;
  detail::fail("config field '", field, "': expected a boolean, got '", text,
               "'");
}

class ConfigDocument {
public:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  static ConfigDocument parse(std::string_view text) {
    ConfigDocument doc;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream is{std::string(text)};
    std::string raw;
    while (std::getline(is, raw)) {
      ++line_no;
      auto cut = raw.find_first_of("#;");
      const std::string line = detail::trim(
          cut == std::string::npos ? raw : std::string_view(raw).substr(0, cut));
      if (line.empty())
        continue;
      if (line.front() == '[') {
        PLAYPRUNE_CHECK(line.back() == ']', "config line ", line_no,
                        ": unterminated section header");
        section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      PLAYPRUNE_CHECK(eq != std::string::npos, "config line ", line_no,
                      ": expected 'key = value'");
      Entry e{section, detail::trim(std::string_view(line).substr(0, eq)),
              detail::trim(std::string_view(line).substr(eq + 1)), line_no};
      PLAYPRUNE_CHECK(!e.key.empty(), "config line ", line_no, ": empty key");
      doc.entries_.push_back(std::move(e));
    }
    return doc;
  }

  static ConfigDocument load(const std::string &path) {
    std::ifstream in(path);
    PLAYPRUNE_CHECK(in.good(), "cannot open config file '", path, "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Last value for section.key, if any.
  std::optional<std::string> get(std::string_view section,
                                 std::string_view key) const {
    std::optional<std::string> v;
    for (const auto &e : entries_)
      if (e.section == section && e.key == key)
        v = e.value;
    return v;
  }

  std::vector<std::string> get_all(std::string_view section,
                                   std::string_view key) const {
    std::vector<std::string> out;
    for (const auto &e : entries_)
      if (e.section == section && e.key == key)
        out.push_back(e.value);
    return out;
  }

  void set(const std::string &section, const std::string &key,
           const std::string &value) {
    entries_.push_back({section, key, value, 0});
  }

  const std::vector<Entry> &entries() const { return entries_; }

  std::string to_string() const {
    std::string out, section = "\x01";
    for (const auto &e : entries_) {
      if (e.section != section) {
        section = e.section;
        if (!section.empty())
          out += "[" + section + "]\n";
      }
      out += e.key + " = " + e.value + "\n";
    }
    return out;
  }

private:
  std::vector<Entry> entries_;
};

} // namespace playprune

#endif // PLAYPRUNE_CONFIG_HPP
