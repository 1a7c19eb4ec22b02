#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "omega/data/series.hpp"
#include "omega/error.hpp"

namespace omega::data {

/// Column selector: unset picks the last column.
using ColumnSelector = std::variant<std::monostate, std::string, std::size_t>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads one numeric column. A first row that does not parse is taken as
/// the header; any later non-numeric cell is an error naming its 1-based row.
inline TimeSeries load_csv(const std::filesystem::path& path, ColumnSelector column = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  TimeSeries series;
  series.id = path.stem().string();
  std::optional<std::size_t> index;
  if (const auto* i = std::get_if<std::size_t>(&column)) index = *i;
  const auto* wanted_name = std::get_if<std::string>(&column);

  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (first) {
      first = false;
      if (wanted_name) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
          if (cells[c] == *wanted_name) index = c;
        }
        if (!index) throw ConfigError("column '" + *wanted_name + "' not found in header of " +
                                      path.string());
        continue;
      }
      const std::size_t c = index.value_or(cells.size() - 1);
      if (c < cells.size() && !detail::parse_double(cells[c])) continue;  // header
    }
    const std::size_t c = index.value_or(cells.size() - 1);
    if (c >= cells.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " has no column " +
                           std::to_string(c),
                       row);
    }
    const auto value = detail::parse_double(cells[c]);
    if (!value) {
      throw ParseError(path.string() + ": non-numeric value '" + std::string(cells[c]) +
                           "' at row " + std::to_string(row),
                       row);
    }
    series.values.push_back(*value);
  }
  if (series.values.empty()) throw EmptySeriesError("no samples in " + path.string());
  return series;
}

/// Writes `time_s,value` (or `index,value` without a sampling rate) with
/// shortest round-trip formatting.
inline void write_series_csv(const std::filesystem::path& path, const TimeSeries& series) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const bool timed = series.sampling_rate_hz.has_value();
  out << (timed ? "time_s" : "index") << ",value\n";
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    if (timed) {
      out << detail::format_double(static_cast<double>(i) / *series.sampling_rate_hz);
    } else {
      out << i;
    }
    out << ',' << detail::format_double(series.values[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

struct TraceRow {
  std::size_t offset;
  std::optional<double> ground_truth;
  std::optional<double> prediction;
};

/// Prediction trace: `offset,ground_truth,prediction`; absent cells stay empty.
inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "offset,ground_truth,prediction\n";
  for (const auto& r : rows) {
    out << r.offset << ',';
    if (r.ground_truth) out << detail::format_double(*r.ground_truth);
    out << ',';
    if (r.prediction) out << detail::format_double(*r.prediction);
    out << '\n';
  }
}

inline void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_trace_csv(out, rows);
}

}  // namespace omega::data
