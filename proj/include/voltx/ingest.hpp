#pragma once

// Tick ingestion: CSV parsing, one-second grid alignment with forward fill,
// and five-minute return windows.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "voltx/common.hpp"

namespace voltx {

struct TickRecord {
  std::int64_t ts_ns = 0;  // nanoseconds since the Unix epoch, UTC
  double price = 0.0;      // quote currency, > 0
  double size = 0.0;       // notional in quote currency, >= 0

  bool operator==(const TickRecord&) const = default;
};

struct TickSeries {
  std::vector<TickRecord> records;  // sorted by ts_ns, stable w.r.t. file order
  std::size_t rejected = 0;
  std::vector<std::size_t> rejected_lines;  // 1-based line numbers

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Column mapping for tick files. Defaults match the `ts_ns,price,size` header.
struct CsvSchema {
  std::string timestamp = "ts_ns";
  std::string price = "price";
  std::string size = "size";
  char delimiter = ',';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parses a tick CSV from a stream. Rows that fail to parse, or carry a
/// non-positive price or a negative size, are rejected and counted.
inline TickSeries parse_ticks(std::istream& in, const CsvSchema& schema = {},
                              const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw SchemaError(source + ": empty file, no header");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  auto header = detail::split(line, schema.delimiter);
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError(source + ":" + std::to_string(line_no) + ": missing column '" + name + "'");
  };
  const std::size_t c_ts = find_col(schema.timestamp);
  const std::size_t c_px = find_col(schema.price);
  const std::size_t c_sz = find_col(schema.size);
  const std::size_t needed = std::max({c_ts, c_px, c_sz}) + 1;

  TickSeries out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, schema.delimiter);
    std::optional<std::int64_t> ts;
    std::optional<double> px, sz;
    if (cells.size() >= needed) {
      ts = detail::parse_number<std::int64_t>(cells[c_ts]);
      px = detail::parse_number<double>(cells[c_px]);
      sz = detail::parse_number<double>(cells[c_sz]);
    }
    if (!ts || !px || !sz || !std::isfinite(*px) || !std::isfinite(*sz) || *px <= 0.0 ||
        *sz < 0.0) {
      ++out.rejected;
      out.rejected_lines.push_back(line_no);
      continue;
    }
    out.records.push_back({*ts, *px, *sz});
  }
  if (out.records.empty()) throw SchemaError(source + ": no valid rows");
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const TickRecord& a, const TickRecord& b) { return a.ts_ns < b.ts_ns; });
  return out;
}

inline TickSeries parse_ticks(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tick file: " + path);
  return parse_ticks(in, schema, path);
}

/// Sort in place with the same stable ordering parse_ticks applies.
inline void sort_ticks(TickSeries& ticks) {
  std::stable_sort(ticks.records.begin(), ticks.records.end(),
                   [](const TickRecord& a, const TickRecord& b) { return a.ts_ns < b.ts_ns; });
}

/// Gapless 1 Hz grid. Second i covers [start_s + i, start_s + i + 1) and
/// carries the last trade price at or before the end of that second.
/// Seconds before the first observable price are invalid.
struct SecondSeries {
  std::int64_t start_s = 0;
  std::vector<double> prices;
  std::vector<std::uint32_t> trade_counts;
  std::vector<double> traded_value;
  std::size_t first_valid = 0;  // == size() when no price was ever observed

  std::size_t size() const { return prices.size(); }
  std::int64_t end_s() const { return start_s + static_cast<std::int64_t>(prices.size()); }
  bool valid(std::size_t i) const { return i >= first_valid && i < prices.size(); }
};

/// Aligns sorted ticks onto [start_s, end_s). Ticks before start_s seed the
/// forward fill; ticks at or after end_s are ignored. Within one second the
/// last trade in file order sets the price.
inline SecondSeries align_to_grid(const TickSeries& ticks, std::int64_t start_s,
                                  std::int64_t end_s) {
  if (start_s >= end_s) throw DomainError("align_to_grid: start must precede end");
  const auto n = static_cast<std::size_t>(end_s - start_s);
  SecondSeries out;
  out.start_s = start_s;
  out.prices.assign(n, 0.0);
  out.trade_counts.assign(n, 0);
  out.traded_value.assign(n, 0.0);

  std::optional<double> last;
  const auto& recs = ticks.records;
  std::size_t k = 0;
  for (; k < recs.size() && floor_seconds(recs[k].ts_ns) < start_s; ++k) last = recs[k].price;

  out.first_valid = n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t sec = start_s + static_cast<std::int64_t>(i);
    for (; k < recs.size() && floor_seconds(recs[k].ts_ns) == sec; ++k) {
      last = recs[k].price;
      ++out.trade_counts[i];
      out.traded_value[i] += recs[k].size;
    }
    if (last) {
      out.prices[i] = *last;
      if (out.first_valid == n) out.first_valid = i;
    }
  }
  return out;
}

/// One five-minute interval of one-second log returns.
struct ReturnWindow {
  std::int64_t start_s = 0;
  std::vector<double> returns;  // returns[j] = log(p[start+j] / p[start+j-1])
  int active_seconds = 0;
  double interval_return = 0.0;  // log(close/open)
  double traded_value = 0.0;
  bool valid = false;
};

/// Extracts the window [interval_start_s, interval_start_s + n). The open is
/// the price of the preceding second, so the grid must cover
/// interval_start_s - 1. Windows touching invalid seconds are marked invalid.
inline ReturnWindow window_returns(const SecondSeries& series, std::int64_t interval_start_s,
                                   int n = kIntervalSeconds) {
  if (n <= 0) throw DomainError("window_returns: n must be positive");
  const std::int64_t idx = interval_start_s - series.start_s;
  if (idx < 1 || idx + n > static_cast<std::int64_t>(series.size()))
    throw DomainError("window_returns: interval starting at " + std::to_string(interval_start_s) +
                      " is not covered by the grid");
  ReturnWindow w;
  w.start_s = interval_start_s;
  w.returns.assign(static_cast<std::size_t>(n), 0.0);
  const auto base = static_cast<std::size_t>(idx);
  for (int j = 0; j < n; ++j) {
    w.active_seconds += series.trade_counts[base + j] > 0 ? 1 : 0;
    w.traded_value += series.traded_value[base + j];
  }
  if (!series.valid(base - 1)) return w;
  w.valid = true;
  for (int j = 0; j < n; ++j) {
    const double prev = series.prices[base + j - 1];
    const double cur = series.prices[base + j];
    w.returns[j] = cur == prev ? 0.0 : std::log(cur / prev);
  }
  w.interval_return = std::log(series.prices[base + n - 1] / series.prices[base - 1]);
  return w;
}

}  // namespace voltx
