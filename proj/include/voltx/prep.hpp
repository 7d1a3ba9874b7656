#pragma once

// Diurnal adjustment, winsorization and multi-instrument panel assembly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltx/common.hpp"
#include "voltx/ingest.hpp"

namespace voltx {

/// Intraday slot of an interval start: [5k, 5k + 5) minutes after UTC midnight.
inline int slot_of(std::int64_t start_s) {
  return static_cast<int>(floor_mod(start_s, kSecondsPerDay) / kIntervalSeconds);
}

enum class Zone { AS = 0, EU = 1, US = 2 };

inline const char* to_string(Zone z) {
  switch (z) {
    case Zone::AS: return "AS";
    case Zone::EU: return "EU";
    case Zone::US: return "US";
  }
  return "?";
}

inline Zone zone_from_string(const std::string& s) {
  if (s == "AS") return Zone::AS;
  if (s == "EU") return Zone::EU;
  if (s == "US") return Zone::US;
  throw SchemaError("unknown zone '" + s + "'");
}

/// Trading zone by UTC hour of the slot start: AS [00,08), EU [08,16), US [16,24).
inline Zone zone_of_slot(int slot) {
  const int hour = slot / 12;
  if (hour < 8) return Zone::AS;
  if (hour < 16) return Zone::EU;
  return Zone::US;
}

inline Zone zone_of(std::int64_t start_s) { return zone_of_slot(slot_of(start_s)); }

/// "HH:MM" label of a slot start.
inline std::string slot_label(int slot) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", slot / 12, (slot % 12) * 5);
  return buf;
}

struct IntervalObservation {
  std::int64_t start_s = 0;
  double value = 0.0;
  bool neg_return = false;

  int slot() const { return slot_of(start_s); }
  bool zero() const { return value == 0.0; }
};

struct InstrumentSeries {
  std::string name;
  std::vector<IntervalObservation> obs;  // ascending start_s
};

enum class Statistic { mean, median };

inline std::string to_string(Statistic s) { return s == Statistic::mean ? "mean" : "median"; }

inline Statistic statistic_from_string(const std::string& s) {
  if (s == "mean") return Statistic::mean;
  if (s == "median") return Statistic::median;
  throw SchemaError("unknown statistic '" + s + "' (expected mean|median)");
}

inline constexpr double kFactorFloor = 1e-12;

struct DiurnalProfile {
  std::array<double, kSlotsPerDay> factors{};
  Statistic statistic = Statistic::mean;
  std::vector<int> floored_slots;  // slots whose statistic fell below the floor
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Per-slot mean or median over the full sample, in slot order.
inline std::array<std::vector<double>, kSlotsPerDay> group_by_slot(
    const std::vector<IntervalObservation>& obs) {
  std::array<std::vector<double>, kSlotsPerDay> by_slot;
  for (const auto& o : obs) by_slot[static_cast<std::size_t>(o.slot())].push_back(o.value);
  return by_slot;
}

inline DiurnalProfile diurnal_factors(const std::vector<IntervalObservation>& obs,
                                      Statistic statistic = Statistic::mean) {
  DiurnalProfile prof;
  prof.statistic = statistic;
  auto by_slot = group_by_slot(obs);
  for (int k = 0; k < kSlotsPerDay; ++k) {
    const auto& vals = by_slot[static_cast<std::size_t>(k)];
    if (vals.empty())
      throw DomainError("diurnal_factors: no observations in slot " + std::to_string(k) + " (" +
                        slot_label(k) + " UTC)");
    double f;
    if (statistic == Statistic::mean) {
      double sum = 0.0;
      for (double v : vals) sum += v;
      f = sum / static_cast<double>(vals.size());
    } else {
      f = median_of(vals);
    }
    if (!(f >= kFactorFloor)) {
      f = kFactorFloor;
      prof.floored_slots.push_back(k);
    }
    prof.factors[static_cast<std::size_t>(k)] = f;
  }
  return prof;
}

inline std::vector<IntervalObservation> diurnal_adjust(const std::vector<IntervalObservation>& obs,
                                                       const DiurnalProfile& profile) {
  std::vector<IntervalObservation> out = obs;
  for (auto& o : out) o.value = o.value / profile.factors[static_cast<std::size_t>(o.slot())];
  return out;
}

struct WinsorizeReport {
  double threshold = 0.0;
  std::size_t clipped = 0;
};

/// Clips values above the nearest-rank (1 - tail) quantile to that quantile.
inline WinsorizeReport winsorize_top(std::vector<double>& values, double tail = 0.0005) {
  if (values.empty()) throw DomainError("winsorize_top: empty series");
  if (tail < 0.0 || tail >= 1.0) throw DomainError("winsorize_top: tail must lie in [0, 1)");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - tail) * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  WinsorizeReport rep;
  rep.threshold = sorted[rank - 1];
  for (double& v : values) {
    if (v > rep.threshold) {
      v = rep.threshold;
      ++rep.clipped;
    }
  }
  return rep;
}

inline WinsorizeReport winsorize_top(std::vector<IntervalObservation>& obs, double tail = 0.0005) {
  std::vector<double> vals;
  vals.reserve(obs.size());
  for (const auto& o : obs) vals.push_back(o.value);
  auto rep = winsorize_top(vals, tail);
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i].value = vals[i];
  return rep;
}

// ---- panel -------------------------------------------------------------------

struct PanelColumn {
  std::string name;
  std::vector<double> values;
  std::vector<std::uint8_t> zero;
  std::vector<std::uint8_t> neg_return;
};

/// Time-aligned T x K matrix stored column-wise.
struct Panel {
  std::vector<std::int64_t> times;  // interval starts, ascending
  std::vector<Zone> zones;
  std::vector<PanelColumn> columns;
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return times.size(); }
  std::size_t cols() const { return columns.size(); }

  std::vector<std::string> instruments() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    throw SchemaError("panel has no instrument '" + name + "'");
  }

  /// Sub-panel with the named columns in the given order.
  Panel select(const std::vector<std::string>& names) const {
    Panel p;
    p.times = times;
    p.zones = zones;
    p.dropped_rows = dropped_rows;
    for (const auto& n : names) p.columns.push_back(columns[index_of(n)]);
    return p;
  }
};

/// Inner join on interval start. Rows missing in any instrument are dropped.
inline Panel build_panel(const std::vector<InstrumentSeries>& series) {
  if (series.empty()) throw DomainError("build_panel: no instruments");
  std::set<std::string> names;
  for (const auto& s : series)
    if (!names.insert(s.name).second) throw DomainError("build_panel: duplicate instrument " + s.name);

  std::map<std::int64_t, std::size_t> seen;
  for (const auto& s : series) {
    std::set<std::int64_t> own;
    for (const auto& o : s.obs)
      if (own.insert(o.start_s).second) ++seen[o.start_s];
  }
  Panel p;
  for (const auto& [t, count] : seen) {
    if (count == series.size())
      p.times.push_back(t);
    else
      ++p.dropped_rows;
  }
  if (p.times.empty()) throw DomainError("build_panel: instruments share no common intervals");
  for (auto t : p.times) p.zones.push_back(zone_of(t));

  for (const auto& s : series) {
    std::map<std::int64_t, const IntervalObservation*> by_time;
    for (const auto& o : s.obs) by_time.emplace(o.start_s, &o);
    PanelColumn col;
    col.name = s.name;
    for (auto t : p.times) {
      const auto* o = by_time.at(t);
      if (o->value < 0.0 || !std::isfinite(o->value))
        throw DomainError("build_panel: invalid value for " + s.name);
      col.values.push_back(o->value);
      col.zero.push_back(o->value == 0.0 ? 1 : 0);
      col.neg_return.push_back(o->neg_return ? 1 : 0);
    }
    p.columns.push_back(std::move(col));
  }
  return p;
}

inline InstrumentSeries column_series(const Panel& p, std::size_t k) {
  InstrumentSeries s;
  s.name = p.columns[k].name;
  for (std::size_t t = 0; t < p.rows(); ++t)
    s.obs.push_back({p.times[t], p.columns[k].values[t], p.columns[k].neg_return[t] != 0});
  return s;
}

// ---- panel I/O ---------------------------------------------------------------

inline constexpr int kPanelSchemaVersion = 1;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Long format: one line per (interval, instrument).
inline void write_panel_csv(std::ostream& os, const Panel& p) {
  os << "timestamp,instrument,value,zero,neg_return,zone\n";
  for (std::size_t t = 0; t < p.rows(); ++t)
    for (const auto& c : p.columns)
      os << p.times[t] << ',' << c.name << ',' << format_double(c.values[t]) << ','
         << int(c.zero[t]) << ',' << int(c.neg_return[t]) << ',' << to_string(p.zones[t]) << '\n';
}

inline Panel read_panel_csv(std::istream& in, const std::string& source = "<panel>") {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError(source + ": empty panel file");
  ++line_no;
  auto header = detail::split(line, ',');
  const std::vector<std::string_view> expected{"timestamp", "instrument", "value",
                                               "zero",      "neg_return", "zone"};
  if (header != expected)
    throw SchemaError(source + ":1: expected header timestamp,instrument,value,zero,neg_return,zone");

  std::vector<std::string> order;
  std::map<std::string, InstrumentSeries> series;
  std::map<std::int64_t, Zone> zones;
  std::map<std::pair<std::string, std::int64_t>, bool> zero_flags;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    auto fail = [&](const std::string& what) {
      throw SchemaError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != 6) fail("expected 6 columns");
    auto ts = detail::parse_number<std::int64_t>(cells[0]);
    auto val = detail::parse_number<double>(cells[2]);
    auto zero = detail::parse_number<int>(cells[3]);
    auto neg = detail::parse_number<int>(cells[4]);
    if (!ts || !val || !zero || !neg) fail("malformed number");
    if (*val < 0.0) fail("negative value");
    if ((*zero != 0) != (*val == 0.0)) fail("zero flag inconsistent with value");
    Zone z;
    try {
      z = zone_from_string(std::string(cells[5]));
    } catch (const SchemaError&) {
      fail("unknown zone");
    }
    if (z != zone_of(*ts)) fail("zone label does not match timestamp");
    std::string name(cells[1]);
    if (!series.count(name)) {
      order.push_back(name);
      series[name].name = name;
    }
    series[name].obs.push_back({*ts, *val, *neg != 0});
    zones[*ts] = z;
  }
  if (order.empty()) throw SchemaError(source + ": panel has no rows");
  std::vector<InstrumentSeries> cols;
  for (const auto& n : order) cols.push_back(std::move(series[n]));
  const std::size_t expected_rows = zones.size();
  for (const auto& c : cols)
    if (c.obs.size() != expected_rows)
      throw SchemaError(source + ": instrument " + c.name + " is not aligned with the others");
  return build_panel(cols);
}

/// Compact columnar JSON.
inline nlohmann::json panel_to_json(const Panel& p) {
  nlohmann::json j;
  j["schema_version"] = kPanelSchemaVersion;
  j["instruments"] = p.instruments();
  j["timestamps"] = p.times;
  std::vector<std::string> z;
  for (auto zone : p.zones) z.push_back(to_string(zone));
  j["zones"] = z;
  j["dropped_rows"] = p.dropped_rows;
  for (const auto& c : p.columns) {
    j["values"][c.name] = c.values;
    j["zero"][c.name] = c.zero;
    j["neg_return"][c.name] = c.neg_return;
  }
  return j;
}

inline Panel panel_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kPanelSchemaVersion)
      throw SchemaError("panel JSON: unsupported schema_version");
    Panel p;
    p.times = j.at("timestamps").get<std::vector<std::int64_t>>();
    for (const auto& z : j.at("zones")) p.zones.push_back(zone_from_string(z.get<std::string>()));
    if (p.zones.size() != p.times.size()) throw SchemaError("panel JSON: zones length mismatch");
    p.dropped_rows = j.value("dropped_rows", std::size_t{0});
    for (const auto& name : j.at("instruments").get<std::vector<std::string>>()) {
      PanelColumn c;
      c.name = name;
      c.values = j.at("values").at(name).get<std::vector<double>>();
      c.zero = j.at("zero").at(name).get<std::vector<std::uint8_t>>();
      c.neg_return = j.at("neg_return").at(name).get<std::vector<std::uint8_t>>();
      if (c.values.size() != p.times.size() || c.zero.size() != p.times.size() ||
          c.neg_return.size() != p.times.size())
        throw SchemaError("panel JSON: column " + name + " length mismatch");
      for (std::size_t t = 0; t < c.values.size(); ++t)
        if ((c.zero[t] != 0) != (c.values[t] == 0.0))
          throw SchemaError("panel JSON: zero mask inconsistent for " + name);
      p.columns.push_back(std::move(c));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("panel JSON: ") + e.what());
  }
}

}  // namespace voltx
