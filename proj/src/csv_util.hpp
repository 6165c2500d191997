#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ppx/error.hpp"

namespace ppx::detail {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  s = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Line reader that tracks 1-based line numbers for error messages.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw Error("cannot open " + path);
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }
  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace ppx::detail

namespace ppx::detail {

struct YearMatrix {
  int first_year = 0;
  std::size_t rows = 0;
  std::vector<double> flat;  // row-major
};

/// Parses a `year,<c0>,...` table with `n_cols` value columns and strictly
/// consecutive years. Non-finite or missing values are rejected.
inline YearMatrix read_year_matrix(const std::string& path, std::size_t n_cols) {
  LineReader in(path);
  std::string line;
  if (!in.next(line)) in.fail("empty file, expected header 'year,c0,...'");
  {
    const auto header = split(line);
    if (header.size() != n_cols + 1 || trim(header[0]) != "year")
      in.fail("malformed header, expected 'year' plus " + std::to_string(n_cols) + " value columns");
  }
  YearMatrix m;
  while (in.next(line)) {
    if (trim(line).empty()) continue;
    const auto parts = split(line);
    if (parts.size() != n_cols + 1)
      in.fail("row has " + std::to_string(parts.size()) + " fields, expected " + std::to_string(n_cols + 1));
    const auto year = to_int<int>(parts[0]);
    if (!year) in.fail("unparseable year");
    if (m.rows == 0) {
      m.first_year = *year;
    } else if (*year != m.first_year + static_cast<int>(m.rows)) {
      in.fail("non-consecutive year " + std::to_string(*year) + ", expected " +
              std::to_string(m.first_year + static_cast<int>(m.rows)));
    }
    for (std::size_t j = 1; j < parts.size(); ++j) {
      const auto v = to_double(parts[j]);
      if (!v) in.fail("missing or unparseable value in column " + std::to_string(j));
      if (!std::isfinite(*v)) in.fail("non-finite value in column " + std::to_string(j));
      m.flat.push_back(*v);
    }
    ++m.rows;
  }
  return m;
}

}  // namespace ppx::detail
