#pragma once

// End-to-end run: ticks -> interval RV -> winsorize/diurnal adjust -> panel
// -> univariate and multivariate fits -> summaries and exports.
//
// Config precedence: command-line overrides > config file > defaults.
// Artifacts are written as <name>.partial and renamed only after every stage
// succeeds; on failure the .partial files stay and the manifest names the
// failing stage. Wall-clock timestamps appear in manifest.json only.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voltx/common.hpp"
#include "voltx/export.hpp"
#include "voltx/ingest.hpp"
#include "voltx/mem.hpp"
#include "voltx/prep.hpp"
#include "voltx/rvol.hpp"
#include "voltx/sim.hpp"
#include "voltx/vmem.hpp"

namespace voltx {

// ---- interval records -----------------------------------------------------------

struct IntervalRecord {
  std::int64_t start_s = 0;
  double value = 0.0;
  bool zeroed = false;
  bool neg_return = false;
  int active_seconds = 0;
  double traded_value = 0.0;
};

/// Realised volatility for every complete 300-second interval in
/// [start_s, end_s). Intervals without an opening price are skipped.
inline std::vector<IntervalRecord> realised_intervals(const TickSeries& ticks, std::int64_t start_s,
                                                      std::int64_t end_s, const RvConfig& cfg) {
  if (end_s - start_s < kIntervalSeconds) throw DomainError("date range shorter than one interval");
  const SecondSeries grid = align_to_grid(ticks, start_s - 1, end_s);
  std::vector<IntervalRecord> out;
  for (std::int64_t s = start_s; s + kIntervalSeconds <= end_s; s += kIntervalSeconds) {
    const ReturnWindow w = window_returns(grid, s, cfg.n);
    const auto obs = estimate_rv(w, cfg);
    if (!obs) continue;
    out.push_back({s, obs->value, obs->is_zeroed, obs->interval_return_negative, w.active_seconds, w.traded_value});
  }
  return out;
}

inline std::string utc_string(std::int64_t s) {
  const auto t = static_cast<std::time_t>(s);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_intervals_csv(std::ostream& os, const std::vector<IntervalRecord>& recs) {
  os << "timestamp,utc,value,zeroed,neg_return,active_seconds,traded_value\n";
  for (const auto& r : recs)
    os << r.start_s << ',' << utc_string(r.start_s) << ',' << format_double(r.value) << ',' << (r.zeroed ? 1 : 0) << ','
       << (r.neg_return ? 1 : 0) << ',' << r.active_seconds << ',' << format_double(r.traded_value) << '\n';
}

inline InstrumentSeries to_series(const std::string& name, const std::vector<IntervalRecord>& recs) {
  InstrumentSeries s{name, {}};
  for (const auto& r : recs) s.obs.push_back({r.start_s, r.value, r.neg_return});
  return s;
}

/// Reads the interval CSV written by write_intervals_csv.
inline std::vector<IntervalRecord> read_intervals_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(source + ": empty file");
  const auto head = detail::split(detail::trim(line), ',');
  if (head.size() < 5 || head[0] != "timestamp" || head[2] != "value" || head[3] != "zeroed" || head[4] != "neg_return")
    throw SchemaError(source + ":1: expected header timestamp,utc,value,zeroed,neg_return,...");
  std::vector<IntervalRecord> out;
  std::size_t ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ',');
    auto ts = f.size() >= 5 ? detail::parse_number<std::int64_t>(f[0]) : std::nullopt;
    auto v = f.size() >= 5 ? detail::parse_number<double>(f[2]) : std::nullopt;
    auto z = f.size() >= 5 ? detail::parse_number<int>(f[3]) : std::nullopt;
    auto n = f.size() >= 5 ? detail::parse_number<int>(f[4]) : std::nullopt;
    if (!ts || !v || !z || !n || *v < 0.0)
      throw SchemaError(source + ":" + std::to_string(ln) + ": malformed interval row");
    IntervalRecord r{*ts, *v, *z != 0, *n != 0, 0, 0.0};
    if (f.size() >= 7) {
      r.active_seconds = detail::parse_number<int>(f[5]).value_or(0);
      r.traded_value = detail::parse_number<double>(f[6]).value_or(0.0);
    }
    out.push_back(r);
  }
  return out;
}

// ---- config -------------------------------------------------------------------------

struct InstrumentConfig {
  std::string name;
  std::string ticks;                   // tick CSV path, relative to the config file
  std::optional<TickSimConfig> simulate;  // used instead of a tick file
};

struct SyntheticMem {
  Eigen::MatrixXd A;  // lag-1 interaction of the volatility multipliers
  Eigen::VectorXd B;
  Eigen::VectorXd s;
  double p_plus = 1.0;
};

struct RunConfig {
  std::vector<InstrumentConfig> instruments;
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;
  RvConfig rv{};
  CsvSchema schema{};
  double winsor_tail = 0.0005;
  Statistic diurnal = Statistic::mean;
  MemSpec spec{};
  bool zones = false;
  double level = 0.01;
  int starts = 3;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::optional<SyntheticMem> synthetic;
  std::filesystem::path base_dir = ".";
  nlohmann::json source;  // normalised config, hashed into the manifest

  void validate() const {
    if (instruments.empty()) throw SchemaError("config: no instruments");
    for (std::size_t i = 0; i < instruments.size(); ++i)
      for (std::size_t j = i + 1; j < instruments.size(); ++j)
        if (instruments[i].name == instruments[j].name)
          throw SchemaError("config: duplicate instrument name " + instruments[i].name);
    if (!(start_s < end_s)) throw SchemaError("config: start must precede end");
    if (floor_mod(start_s, kIntervalSeconds) != 0 || floor_mod(end_s, kIntervalSeconds) != 0)
      throw SchemaError("config: start and end must fall on 5-minute boundaries");
    if (synthetic && synthetic->A.rows() != static_cast<Eigen::Index>(instruments.size()))
      throw SchemaError("config: synthetic matrix size does not match the instruments");
  }
};

/// Accepts epoch seconds, "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SSZ" (UTC).
inline std::int64_t parse_time(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (!j.is_string()) throw SchemaError("config: time must be an integer or an ISO-8601 string");
  const std::string s = j.get<std::string>();
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char tail = 0;
  const int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &se, &tail);
  if (!(n == 3 || (n == 7 && tail == 'Z') || n == 6))
    throw SchemaError("config: cannot parse time '" + s + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 59) throw SchemaError("config: invalid date '" + s + "'");
  return sys_days{ymd}.time_since_epoch().count() * kSecondsPerDay + h * 3600 + mi * 60 + se;
}

namespace detail {

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != r) throw SchemaError("config: synthetic A must be square");
    for (Eigen::Index c = 0; c < r; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    for (const auto& ij : j.at("instruments")) {
      InstrumentConfig ic;
      ic.name = ij.at("name").get<std::string>();
      if (ij.contains("simulate")) {
        const auto& sj = ij.at("simulate");
        TickSimConfig t;
        t.sigma_annual = sj.value("sigma_annual", t.sigma_annual);
        t.arrival_probability = sj.value("arrival_probability", t.arrival_probability);
        t.jump_intensity = sj.value("jump_intensity", t.jump_intensity);
        t.jump_size = sj.value("jump_size", t.jump_size);
        t.initial_price = sj.value("initial_price", t.initial_price);
        ic.simulate = t;
      } else {
        ic.ticks = ij.at("ticks").get<std::string>();
      }
      c.instruments.push_back(ic);
    }
    c.start_s = parse_time(j.at("start"));
    c.end_s = parse_time(j.at("end"));
    if (j.contains("estimator")) {
      const auto& e = j.at("estimator");
      c.rv.estimator = estimator_from_string(e.value("name", std::string("preavg")));
      c.rv.theta = e.value("theta", c.rv.theta);
      c.rv.activity_threshold = e.value("activity_threshold", c.rv.activity_threshold);
      c.rv.debias = e.value("debias", c.rv.debias);
    }
    if (j.contains("schema")) {
      const auto& s = j.at("schema");
      c.schema.timestamp = s.value("timestamp", c.schema.timestamp);
      c.schema.price = s.value("price", c.schema.price);
      c.schema.size = s.value("size", c.schema.size);
    }
    if (j.contains("adjust")) {
      const auto& a = j.at("adjust");
      c.winsor_tail = a.value("winsor_tail", c.winsor_tail);
      c.diurnal = statistic_from_string(a.value("statistic", std::string("mean")));
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.spec.p = m.value("p", 1);
      c.spec.q = m.value("q", 1);
      c.spec.asymmetry = m.value("asymmetry", true);
      c.spec.zero_augmented = m.value("zero_augmented", true);
      c.zones = m.value("zones", false);
      c.level = m.value("level", 0.01);
      c.starts = m.value("starts", 3);
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = j.value("output_dir", std::string("out"));
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      SyntheticMem m;
      m.A = detail::json_matrix(s.at("A"));
      m.B = detail::json_vector(s.at("B"));
      m.s = detail::json_vector(s.at("s"));
      m.p_plus = s.value("p_plus", 1.0);
      if (m.B.size() != m.A.rows() || m.s.size() != m.A.rows())
        throw SchemaError("config: synthetic B and s must match A");
      c.synthetic = m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  c.source = j;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- run ----------------------------------------------------------------------------

class StageError : public Error {
 public:
  StageError(std::string stage, int exit_code, const std::string& what)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
  bool all_converged = true;
  int exit_code = 0;
};

namespace detail {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& content) {
    const auto tmp = dir_ / (name + ".partial");
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << content;
    f.close();
    if (!f) throw IoError("write failed for " + tmp.string());
    names_.push_back(name);
  }
  void json(const std::string& name, const nlohmann::json& j) { text(name, j.dump(2) + "\n"); }

  void commit() {
    for (const auto& n : names_) std::filesystem::rename(dir_ / (n + ".partial"), dir_ / n);
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

inline std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  return utc_string(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

inline int exit_code_for(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const IoError&) {
    return 2;
  } catch (const SchemaError&) {
    return 2;
  } catch (const DomainError&) {
    return 2;
  } catch (...) {
    return 1;
  }
}

}  // namespace detail

/// Tick series for each configured instrument, simulated or read from disk.
inline std::vector<TickSeries> load_ticks(const RunConfig& cfg) {
  std::vector<TickSeries> ticks(cfg.instruments.size());
  std::vector<std::vector<double>> multipliers(cfg.instruments.size());
  const auto n_int = static_cast<std::size_t>((cfg.end_s - cfg.start_s) / kIntervalSeconds);
  if (cfg.synthetic) {
    const auto K = cfg.synthetic->A.rows();
    VParamSet vp = VParamSet::zeros(K, 1, 1);
    vp.A[0] = cfg.synthetic->A;
    vp.B[0] = cfg.synthetic->B;
    vp.s = cfg.synthetic->s;
    vp.p_plus = Eigen::VectorXd::Constant(K, cfg.synthetic->p_plus);
    VMemSimOptions so;
    so.start_s = cfg.start_s;
    const auto sim = simulate_vlogmem(vp, n_int, cfg.seed, so);
    for (std::size_t i = 0; i < cfg.instruments.size(); ++i) multipliers[i] = sim.x[i];
  }
  parallel_for(cfg.instruments.size(), [&](std::size_t i) {
    const auto& ic = cfg.instruments[i];
    if (ic.simulate) {
      TickSimConfig t = *ic.simulate;
      t.seed = cfg.seed + 0x1000 * (i + 1);
      t.start_s = cfg.start_s;
      t.intervals = n_int;
      t.interval_vol_multiplier = multipliers[i];
      ticks[i] = simulate_ticks(t);
    } else {
      const auto path = std::filesystem::path(ic.ticks).is_absolute() ? std::filesystem::path(ic.ticks)
                                                                       : cfg.base_dir / ic.ticks;
      ticks[i] = parse_ticks(path.string(), cfg.schema);
    }
  });
  return ticks;
}

inline RunResult run_pipeline(const RunConfig& cfg) {
  RunResult res;
  const std::string started = detail::now_utc();
  res.output_dir = std::filesystem::path(cfg.output_dir);
  if (res.output_dir.is_relative()) res.output_dir = cfg.base_dir / res.output_dir;
  std::filesystem::create_directories(res.output_dir);
  detail::ArtifactWriter out(res.output_dir);
  const std::string config_hash = hex64(fnv1a64(cfg.source.dump()));
  std::string stage;

  auto write_manifest = [&](const std::string& status, const std::string& failed_stage, const std::string& error) {
    nlohmann::json m{{"schema_version", 1},
                     {"config_hash", config_hash},
                     {"seed", cfg.seed},
                     {"started_utc", started},
                     {"finished_utc", detail::now_utc()},
                     {"status", status},
                     {"artifacts", out.names()},
                     {"warnings", res.warnings}};
    if (!failed_stage.empty()) {
      m["failed_stage"] = failed_stage;
      m["error"] = error;
    }
    std::ofstream f(res.output_dir / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
  };

  try {
    stage = "ingest";
    for (const auto& w : config_warnings(cfg.rv)) res.warnings.push_back(w);
    const std::vector<TickSeries> ticks = load_ticks(cfg);
    for (std::size_t i = 0; i < ticks.size(); ++i)
      if (ticks[i].rejected > 0)
        res.warnings.push_back(cfg.instruments[i].name + ": " + std::to_string(ticks[i].rejected) + " rows rejected");

    stage = "rv";
    const std::size_t K = cfg.instruments.size();
    std::vector<std::vector<IntervalRecord>> intervals(K);
    parallel_for(K, [&](std::size_t i) { intervals[i] = realised_intervals(ticks[i], cfg.start_s, cfg.end_s, cfg.rv); });
    for (std::size_t i = 0; i < K; ++i) {
      std::ostringstream os;
      write_intervals_csv(os, intervals[i]);
      out.text("intervals_" + cfg.instruments[i].name + ".csv", os.str());
    }

    stage = "adjust";
    std::vector<InstrumentSeries> raw(K), adjusted(K);
    for (std::size_t i = 0; i < K; ++i) {
      raw[i] = to_series(cfg.instruments[i].name, intervals[i]);
      const DiurnalProfile prof = diurnal_factors(raw[i].obs, cfg.diurnal);
      for (int sl : prof.floored_slots)
        res.warnings.push_back(raw[i].name + ": diurnal factor floored in slot " + slot_label(sl));
      adjusted[i] = {raw[i].name, diurnal_adjust(raw[i].obs, prof)};
      const auto rep = winsorize_top(adjusted[i].obs, cfg.winsor_tail);
      if (rep.clipped > 0)
        res.warnings.push_back(raw[i].name + ": " + std::to_string(rep.clipped) + " values winsorized");
    }
    const Panel panel = build_panel(adjusted);
    if (panel.dropped_rows > 0)
      res.warnings.push_back(std::to_string(panel.dropped_rows) + " rows dropped by timestamp alignment");
    {
      std::ostringstream os;
      write_panel_csv(os, panel);
      out.text("panel.csv", os.str());
      out.json("panel.json", panel_to_json(panel));
    }

    stage = "fit-uni";
    FitOptions fo;
    fo.seed = cfg.seed;
    fo.starts = cfg.starts;
    std::vector<FitResult> uni(K);
    parallel_for(K, [&](std::size_t i) {
      const PanelColumn& c = panel.columns[i];
      uni[i] = fit_logmem(MemData{c.values, c.neg_return, {}}, cfg.spec, fo);
    });
    for (std::size_t i = 0; i < K; ++i) {
      res.all_converged = res.all_converged && uni[i].converged;
      out.json("fit_uni_" + panel.columns[i].name + ".json", fit_to_json(uni[i], panel.columns[i].name));
    }

    stage = "fit-multi";
    VFitOptions vo;
    vo.level = cfg.level;
    vo.zones = cfg.zones;
    vo.fit = fo;
    const VFitResult vf = fit_vlogmem(panel, cfg.spec, vo);
    res.all_converged = res.all_converged && vf.all_converged();
    out.json("fit_multi.json", vfit_to_json(vf));

    stage = "summarize";
    const SpilloverSummary ss = spillover_summary(vf);
    nlohmann::json sj{{"schema_version", 1},
                      {"instruments", vf.instruments},
                      {"significance_level", ss.significance_level},
                      {"to", std::vector<double>(ss.to_sums.data(), ss.to_sums.data() + ss.to_sums.size())},
                      {"from", std::vector<double>(ss.from_sums.data(), ss.from_sums.data() + ss.from_sums.size())},
                      {"total_offdiag_abs", ss.total_offdiag_abs}};
    if (vf.zone_A)
      for (Zone z : kZones) {
        const ZoneTotals zt = zone_totals(vf, z, cfg.level);
        sj["zones"][to_string(z)] = {{"total_offdiag_abs", zt.total_offdiag_abs}, {"total_diag", zt.total_diag}};
      }
    out.json("spillover.json", sj);

    stage = "export";
    out.json("flowgraph.json", flow_graph_to_json(export_flow_graph(vf, cfg.level)));
    for (std::size_t i = 0; i < K; ++i) {
      std::ostringstream prof, hist;
      write_profile_csv(prof, intraday_profile(raw[i].obs, Statistic::mean));
      out.text("profile_" + raw[i].name + ".csv", prof.str());
      std::vector<double> before, after;
      for (const auto& o : raw[i].obs) before.push_back(o.value);
      for (const auto& o : adjusted[i].obs) after.push_back(o.value);
      write_histogram_csv(hist, export_histogram(before, after, {50, true}));
      out.text("hist_" + raw[i].name + ".csv", hist.str());
    }

    stage = "commit";
    out.commit();
  } catch (const std::exception& e) {
    const int code = detail::exit_code_for(std::current_exception());
    write_manifest("failed", stage, e.what());
    throw StageError(stage, code, e.what());
  }
  res.exit_code = res.all_converged ? 0 : 1;
  write_manifest(res.all_converged ? "ok" : "not_converged", "", "");
  res.artifacts = out.names();
  return res;
}

}  // namespace voltx
