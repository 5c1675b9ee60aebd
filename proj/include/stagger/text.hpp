#pragma once

// Small helpers for the delimited-text formats the toolkit reads and writes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "stagger/error.hpp"

namespace stagger::text {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Splits one record. Double quotes protect delimiters; "" inside quotes is a literal quote.
inline std::vector<std::string> split_record(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

inline std::string quote_if_needed(std::string_view field, char delim) {
  if (field.find(delim) == std::string_view::npos && field.find('"') == std::string_view::npos &&
      field.find('\n') == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool is_skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

inline double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    // from_chars rejects "inf"/"nan" spellings on some libraries; let strtod decide.
    std::string tmp(s);
    char* end = nullptr;
    value = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
      throw Error(ErrorCode::kParse, "cannot parse " + std::string(what) + " from '" + tmp + "'");
    }
  }
  return value;
}

inline long long parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::kParse,
                "cannot parse integer " + std::string(what) + " from '" + std::string(s) + "'");
  }
  return value;
}

// Shortest representation that round-trips bitwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string out(buf);
  // "-0.00" reads as a sign flip in tables.
  if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to '" + path + "'");
}

// FNV-1a, used to fingerprint inputs in run manifests.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Header-indexed view over a delimited table. Blank lines and `#` comment
/// lines are skipped wherever they appear.
class Table {
 public:
  static Table parse(std::string_view content, char delim = ',') {
    Table t;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool have_header = false;
    while (pos <= content.size()) {
      std::size_t end = content.find('\n', pos);
      if (end == std::string_view::npos) end = content.size();
      std::string_view line = content.substr(pos, end - pos);
      ++line_no;
      pos = end + 1;
      if (is_skippable(line)) {
        if (end == content.size()) break;
        continue;
      }
      auto fields = split_record(line, delim);
      if (!have_header) {
        t.header_ = std::move(fields);
        have_header = true;
      } else {
        if (fields.size() != t.header_.size()) {
          throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(t.header_.size()) + " fields, got " +
                                             std::to_string(fields.size()));
        }
        t.rows_.push_back(std::move(fields));
        t.line_numbers_.push_back(line_no);
      }
      if (end == content.size()) break;
    }
    if (!have_header) throw Error(ErrorCode::kParse, "missing header row");
    return t;
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t line_number(std::size_t row) const { return line_numbers_[row]; }

  std::ptrdiff_t find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  }

  std::size_t require_column(std::string_view name) const {
    const auto idx = find_column(name);
    if (idx < 0) throw Error(ErrorCode::kParse, "missing required column '" + std::string(name) + "'");
    return static_cast<std::size_t>(idx);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> line_numbers_;
};

}  // namespace stagger::text
