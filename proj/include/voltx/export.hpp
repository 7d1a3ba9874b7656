#pragma once

// Figure-ready exports. Formats (all schema_version 1):
//   flowgraph.json      nodes with self-persistence, directed edges source -> target
//   profile_<inst>.csv  slot,utc_time,value,count
//   hist_<inst>.csv     bin,lower,upper,before,after

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voltx/common.hpp"
#include "voltx/prep.hpp"
#include "voltx/vmem.hpp"

namespace voltx {

inline constexpr int kExportSchemaVersion = 1;

struct FlowNode {
  std::string label;
  double self_persistence = 0.0;
  bool self_significant = false;
};

struct FlowEdge {
  std::string source;
  std::string target;
  double weight = 0.0;
  double pvalue = 0.0;
};

struct FlowGraph {
  double significance_level = 0.01;
  std::vector<FlowNode> nodes;
  std::vector<FlowEdge> edges;
};

/// A(i, j) is the effect of lagged instrument j on instrument i, so it
/// becomes the edge j -> i. Edges are ordered by source, then target.
inline FlowGraph export_flow_graph(const Eigen::MatrixXd& A, const Eigen::MatrixXd& pvalues,
                                   const std::vector<std::string>& labels, double level) {
  const auto K = static_cast<Eigen::Index>(labels.size());
  if (A.rows() != K || A.cols() != K || pvalues.rows() != K || pvalues.cols() != K)
    throw DomainError("export_flow_graph: matrix size does not match the labels");
  FlowGraph g;
  g.significance_level = level;
  for (Eigen::Index i = 0; i < K; ++i)
    g.nodes.push_back({labels[static_cast<std::size_t>(i)], A(i, i), pvalues(i, i) < level});
  for (Eigen::Index src = 0; src < K; ++src)
    for (Eigen::Index tgt = 0; tgt < K; ++tgt) {
      if (src == tgt || !(pvalues(tgt, src) < level) || !std::isfinite(A(tgt, src))) continue;
      g.edges.push_back({labels[static_cast<std::size_t>(src)], labels[static_cast<std::size_t>(tgt)], A(tgt, src),
                         pvalues(tgt, src)});
    }
  return g;
}

inline FlowGraph export_flow_graph(const VFitResult& fit, double level) {
  return export_flow_graph(fit.A.front().estimate, fit.A.front().pvalue, fit.instruments, level);
}

inline nlohmann::json flow_graph_to_json(const FlowGraph& g) {
  using nlohmann::json;
  json nodes = json::array(), edges = json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    nodes.push_back({{"id", i},
                     {"label", g.nodes[i].label},
                     {"self_persistence", detail::finite_or_null(g.nodes[i].self_persistence)},
                     {"self_significant", g.nodes[i].self_significant}});
  for (const auto& e : g.edges)
    edges.push_back({{"source", e.source},
                     {"target", e.target},
                     {"weight", e.weight},
                     {"sign", e.weight < 0.0 ? "negative" : "positive"},
                     {"pvalue", detail::finite_or_null(e.pvalue)}});
  return {{"schema_version", kExportSchemaVersion},
          {"significance_level", g.significance_level},
          {"nodes", nodes},
          {"edges", edges}};
}

inline FlowGraph flow_graph_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kExportSchemaVersion)
      throw SchemaError("flowgraph: unsupported schema_version " + j.at("schema_version").dump());
    FlowGraph g;
    g.significance_level = j.at("significance_level").get<double>();
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("label").get<std::string>(), detail::number_or_nan(n.at("self_persistence")),
                         n.at("self_significant").get<bool>()});
    for (const auto& e : j.at("edges"))
      g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                         e.at("weight").get<double>(), detail::number_or_nan(e.at("pvalue"))});
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("flowgraph: ") + e.what());
  }
}

// ---- intraday profile ---------------------------------------------------------------

struct ProfileRow {
  int slot = 0;
  double value = 0.0;
  std::size_t count = 0;
};

/// Per-slot mean or median of the raw values (not normalised).
inline std::vector<ProfileRow> intraday_profile(const std::vector<IntervalObservation>& obs, Statistic stat) {
  const auto groups = group_by_slot(obs);
  std::vector<ProfileRow> rows;
  rows.reserve(kSlotsPerDay);
  for (int k = 0; k < kSlotsPerDay; ++k) {
    const auto& g = groups[static_cast<std::size_t>(k)];
    if (g.empty()) throw DomainError("intraday_profile: slot " + std::to_string(k) + " (" + slot_label(k) + ") has no observations");
    double v;
    if (stat == Statistic::median) {
      v = median_of(g);
    } else {
      v = 0.0;
      for (double x : g) v += x;
      v /= static_cast<double>(g.size());
    }
    rows.push_back({k, v, g.size()});
  }
  return rows;
}

inline void write_profile_csv(std::ostream& os, const std::vector<ProfileRow>& rows) {
  os << "slot,utc_time,value,count\n";
  for (const auto& r : rows) os << r.slot << ',' << slot_label(r.slot) << ',' << format_double(r.value) << ',' << r.count << '\n';
}

// ---- histograms ---------------------------------------------------------------

struct HistogramBin {
  double lower = 0.0, upper = 0.0;
  std::size_t before = 0, after = 0;
};

struct HistogramOptions {
  int bins = 50;
  bool exclude_zeros = false;
};

/// Both series are binned on shared, equally spaced edges spanning their
/// combined range; the last bin includes its upper edge.
inline std::vector<HistogramBin> export_histogram(const std::vector<double>& before, const std::vector<double>& after,
                                                  const HistogramOptions& opt = {}) {
  if (opt.bins < 1) throw DomainError("export_histogram: bins must be at least 1");
  auto keep = [&](double v) { return std::isfinite(v) && !(opt.exclude_zeros && v == 0.0); };
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* s : {&before, &after})
    for (double v : *s)
      if (keep(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  } else if (!(hi > lo)) {
    hi = lo + 1.0;
  }
  const double width = (hi - lo) / opt.bins;
  std::vector<HistogramBin> out(static_cast<std::size_t>(opt.bins));
  for (int b = 0; b < opt.bins; ++b) {
    out[static_cast<std::size_t>(b)].lower = lo + width * b;
    out[static_cast<std::size_t>(b)].upper = b + 1 == opt.bins ? hi : lo + width * (b + 1);
  }
  auto bin_of = [&](double v) {
    auto b = static_cast<long>(std::floor((v - lo) / width));
    return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(opt.bins - 1)));
  };
  for (double v : before)
    if (keep(v)) ++out[bin_of(v)].before;
  for (double v : after)
    if (keep(v)) ++out[bin_of(v)].after;
  return out;
}

inline void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& bins) {
  os << "bin,lower,upper,before,after\n";
  for (std::size_t b = 0; b < bins.size(); ++b)
    os << b << ',' << format_double(bins[b].lower) << ',' << format_double(bins[b].upper) << ',' << bins[b].before << ','
       << bins[b].after << '\n';
}

}  // namespace voltx
