// voltx: command-line driver for the realised-volatility / LogMEM pipeline.
//
// Exit codes: 0 success, 1 estimation did not converge (results still
// written, flagged), 2 I/O, schema or usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voltx/export.hpp"
#include "voltx/ingest.hpp"
#include "voltx/mem.hpp"
#include "voltx/pipeline.hpp"
#include "voltx/prep.hpp"
#include "voltx/rvol.hpp"
#include "voltx/sim.hpp"
#include "voltx/vmem.hpp"

using namespace voltx;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return f;
}

void write_file(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << content;
  if (!f) throw IoError("write failed for " + path);
}

Panel load_panel(const std::string& path) {
  auto f = open_in(path);
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path + ": " + e.what());
    }
    return panel_from_json(j);
  }
  return read_panel_csv(f, path);
}

nlohmann::json load_json(const std::string& path) {
  auto f = open_in(path);
  try {
    nlohmann::json j;
    f >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

std::pair<std::string, std::string> split_pair(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw SchemaError("expected NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

struct SpecFlags {
  int p = 1, q = 1;
  bool no_asymmetry = false, no_zero = false;
  int starts = 3;
  std::uint64_t seed = 0;
  std::vector<std::string> fixed;

  void add(CLI::App* app) {
    app->add_option("--p", p, "Short-term lags")->check(CLI::PositiveNumber);
    app->add_option("--q", q, "Long-term lags")->check(CLI::PositiveNumber);
    app->add_flag("--no-asymmetry", no_asymmetry, "Drop the asymmetry term");
    app->add_flag("--no-zero-augmentation", no_zero, "Drop the zero-indicator terms");
    app->add_option("--starts", starts, "Optimizer starts")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Seed for perturbed starts");
    app->add_option("--fix", fixed, "Hold a parameter fixed, NAME=VALUE");
  }
  MemSpec spec() const {
    MemSpec s;
    s.p = p;
    s.q = q;
    s.asymmetry = !no_asymmetry;
    s.zero_augmented = !no_zero;
    return s;
  }
  FitOptions options() const {
    FitOptions o;
    o.starts = starts;
    o.seed = seed;
    for (const auto& f : fixed) {
      auto [n, v] = split_pair(f);
      auto d = detail::parse_number<double>(v);
      if (!d) throw SchemaError("--fix: bad value in '" + f + "'");
      o.fixed[n] = *d;
    }
    return o;
  }
};

std::string percent_table(const std::vector<std::string>& names, const Eigen::VectorXd& rel) {
  std::ostringstream os;
  os << "target,response_pct\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", 100.0 * rel(static_cast<Eigen::Index>(i)));
    os << names[i] << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Realised volatility panels and LogMEM spillover estimation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  int exit_code = 0;

  // ---- ingest
  std::string in_ticks, out_path, start_str, end_str;
  CsvSchema schema;
  std::string delim = ",";
  auto add_schema = [&](CLI::App* c) {
    c->add_option("--ts-col", schema.timestamp, "Timestamp column (ns since epoch)");
    c->add_option("--price-col", schema.price, "Price column");
    c->add_option("--size-col", schema.size, "Size column");
    c->add_option("--delimiter", delim, "Field delimiter");
  };
  auto* ingest = app.add_subcommand("ingest", "Align ticks to a one-second grid");
  ingest->add_option("--input", in_ticks, "Tick CSV")->required();
  ingest->add_option("--start", start_str, "Range start (epoch s or ISO date)")->required();
  ingest->add_option("--end", end_str, "Range end (exclusive)")->required();
  ingest->add_option("--output", out_path, "Output CSV (default stdout)");
  add_schema(ingest);

  // ---- rv
  std::vector<std::string> rv_inputs;
  std::string estimator = "preavg";
  RvConfig rvcfg;
  std::string rv_dir;
  auto* rv = app.add_subcommand("rv", "Five-minute realised volatility panel from ticks");
  rv->add_option("--input", rv_inputs, "NAME=PATH tick file, repeatable")->required();
  rv->add_option("--start", start_str, "Range start")->required();
  rv->add_option("--end", end_str, "Range end (exclusive)")->required();
  rv->add_option("--estimator", estimator, "preavg | bpv | medrv | squared")
      ->check(CLI::IsMember({"preavg", "bpv", "medrv", "squared"}));
  rv->add_option("--theta", rvcfg.theta, "Pre-averaging theta");
  rv->add_option("--threshold", rvcfg.activity_threshold, "Minimum active-second fraction");
  rv->add_flag("--debias", rvcfg.debias, "Rescale the pre-averaged estimate");
  rv->add_option("--output", out_path, "Panel CSV (default stdout)");
  rv->add_option("--intervals-dir", rv_dir, "Also write intervals_<name>.csv here");
  add_schema(rv);

  // ---- adjust
  std::string panel_path;
  double winsor_tail = 0.0005;
  std::string statistic = "mean";
  auto* adjust = app.add_subcommand("adjust", "Winsorize and remove the diurnal pattern, per instrument");
  adjust->add_option("--panel", panel_path, "Panel CSV or JSON")->required();
  adjust->add_option("--winsor-tail", winsor_tail, "Upper tail fraction to clip");
  adjust->add_option("--statistic", statistic, "mean | median")->check(CLI::IsMember({"mean", "median"}));
  adjust->add_option("--output", out_path, "Adjusted panel CSV (default stdout)");

  // ---- fit-uni
  SpecFlags uni_flags;
  std::string instrument;
  auto* fit_uni = app.add_subcommand("fit-uni", "Univariate LogMEM per instrument");
  fit_uni->add_option("--panel", panel_path, "Panel CSV or JSON")->required();
  fit_uni->add_option("--instrument", instrument, "Fit one instrument only");
  fit_uni->add_option("--output", out_path, "Output JSON (default stdout)");
  uni_flags.add(fit_uni);

  // ---- fit-multi / fit-intraday
  SpecFlags multi_flags;
  double level = 0.01;
  bool restricted = false;
  auto* fit_multi = app.add_subcommand("fit-multi", "Multivariate LogMEM, equation by equation");
  auto* fit_intraday = app.add_subcommand("fit-intraday", "Multivariate LogMEM with zone matrices");
  for (auto* c : {fit_multi, fit_intraday}) {
    c->add_option("--panel", panel_path, "Panel CSV or JSON")->required();
    c->add_option("--level", level, "Significance level")->check(CLI::Range(0.0, 1.0));
    c->add_option("--output", out_path, "Output JSON (default stdout)");
    c->add_flag("--no-cross", restricted, "Hold cross terms at zero");
    multi_flags.add(c);
  }

  // ---- spillover
  std::string fit_path;
  auto* spill = app.add_subcommand("spillover", "To/From sums of significant lag-1 entries");
  spill->add_option("--fit", fit_path, "Multivariate fit JSON")->required();
  auto* spill_level = spill->add_option("--level", level, "Significance level (default: the fit's)");
  spill->add_option("--output", out_path, "Output JSON (default stdout)");

  // ---- shock
  std::string source;
  bool one_sd = false;
  double multiplier = 0.0;
  auto* shock = app.add_subcommand("shock", "One-step response to an innovation shock");
  shock->add_option("--fit", fit_path, "Multivariate fit JSON")->required();
  shock->add_option("--source", source, "Shocked instrument")->required();
  auto* sd_flag = shock->add_flag("--sd", one_sd, "One conditional standard deviation");
  auto* mult_opt = shock->add_option("--multiplier", multiplier, "Explicit innovation multiplier");
  sd_flag->excludes(mult_opt);
  shock->add_option("--output", out_path, "Output CSV (default stdout)");

  // ---- simulate
  std::string kind = "ticks";
  TickSimConfig tcfg;
  std::size_t T = 10000;
  double omega = 0.0, alpha = 0.35, gamma = 0.03, beta = 0.55, s = 0.28, p_plus = 1.0;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Synthetic ticks or LogMEM series");
  simulate->add_option("--kind", kind, "ticks | mem")->check(CLI::IsMember({"ticks", "mem"}));
  simulate->add_option("--seed", sim_seed, "Seed");
  simulate->add_option("--start", start_str, "First interval start (ticks)");
  simulate->add_option("--intervals", tcfg.intervals, "Number of 5-minute intervals (ticks)");
  simulate->add_option("--sigma", tcfg.sigma_annual, "Annualised volatility (ticks)");
  simulate->add_option("--arrival", tcfg.arrival_probability, "Trade probability per second (ticks)");
  simulate->add_option("--jump-intensity", tcfg.jump_intensity, "Jumps per second (ticks)");
  simulate->add_option("--jump-size", tcfg.jump_size, "Absolute log jump (ticks)");
  simulate->add_option("--T", T, "Series length (mem)");
  simulate->add_option("--omega", omega, "(mem)");
  simulate->add_option("--alpha", alpha, "(mem)");
  simulate->add_option("--gamma", gamma, "(mem)");
  simulate->add_option("--beta", beta, "(mem)");
  simulate->add_option("--s", s, "(mem)");
  simulate->add_option("--p-plus", p_plus, "(mem)");
  simulate->add_option("--output", out_path, "Output CSV (default stdout)");

  // ---- export
  auto* exp = app.add_subcommand("export", "Figure-ready artifacts");
  exp->require_subcommand(1);
  auto* exp_flow = exp->add_subcommand("flowgraph", "flowgraph.json from a multivariate fit");
  exp_flow->add_option("--fit", fit_path, "Multivariate fit JSON")->required();
  auto* flow_level = exp_flow->add_option("--level", level, "Significance level (default: the fit's)");
  exp_flow->add_option("--output", out_path, "Output JSON (default stdout)");
  auto* exp_prof = exp->add_subcommand("profile", "288-slot intraday profile");
  exp_prof->add_option("--panel", panel_path, "Panel CSV or JSON")->required();
  exp_prof->add_option("--instrument", instrument, "Instrument")->required();
  exp_prof->add_option("--statistic", statistic, "mean | median")->check(CLI::IsMember({"mean", "median"}));
  exp_prof->add_option("--output", out_path, "Output CSV (default stdout)");
  std::string after_path;
  HistogramOptions hopt;
  auto* exp_hist = exp->add_subcommand("hist", "Before/after histogram on shared bins");
  exp_hist->add_option("--before", panel_path, "Panel before adjustment")->required();
  exp_hist->add_option("--after", after_path, "Panel after adjustment")->required();
  exp_hist->add_option("--instrument", instrument, "Instrument")->required();
  exp_hist->add_option("--bins", hopt.bins, "Number of bins")->check(CLI::PositiveNumber);
  exp_hist->add_flag("--exclude-zeros", hopt.exclude_zeros, "Drop zero values");
  exp_hist->add_option("--output", out_path, "Output CSV (default stdout)");

  // ---- run
  std::string config_path, out_dir;
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "Full pipeline from a JSON config");
  run->add_option("--config", config_path, "Run config JSON")->required();
  auto* seed_opt = run->add_option("--seed", run_seed, "Override the config seed");
  run->add_option("--output-dir", out_dir, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  schema.delimiter = delim.empty() ? ',' : delim[0];

  try {
    if (*ingest) {
      const TickSeries ticks = parse_ticks(in_ticks, schema);
      const std::int64_t a = parse_time(nlohmann::json(start_str)), b = parse_time(nlohmann::json(end_str));
      const SecondSeries g = align_to_grid(ticks, a, b);
      std::ostringstream os;
      os << "second,price,trades,traded_value\n";
      for (std::size_t i = 0; i < g.size(); ++i) {
        os << g.start_s + static_cast<std::int64_t>(i) << ',';
        if (g.valid(i)) os << format_double(g.prices[i]);
        os << ',' << g.trade_counts[i] << ',' << format_double(g.traded_value[i]) << '\n';
      }
      write_file(out_path, os.str());
      if (ticks.rejected) std::cerr << "warning: " << ticks.rejected << " rows rejected\n";
    } else if (*rv) {
      rvcfg.estimator = estimator_from_string(estimator);
      for (const auto& w : config_warnings(rvcfg)) std::cerr << "warning: " << w << '\n';
      const std::int64_t a = parse_time(nlohmann::json(start_str)), b = parse_time(nlohmann::json(end_str));
      std::vector<InstrumentSeries> series;
      for (const auto& in : rv_inputs) {
        auto [name, path] = split_pair(in);
        const auto recs = realised_intervals(parse_ticks(path, schema), a, b, rvcfg);
        if (!rv_dir.empty()) {
          std::ostringstream os;
          write_intervals_csv(os, recs);
          write_file(rv_dir + "/intervals_" + name + ".csv", os.str());
        }
        series.push_back(to_series(name, recs));
      }
      std::ostringstream os;
      write_panel_csv(os, build_panel(series));
      write_file(out_path, os.str());
    } else if (*adjust) {
      const Panel p = load_panel(panel_path);
      std::vector<InstrumentSeries> adj;
      for (std::size_t k = 0; k < p.cols(); ++k) {
        const InstrumentSeries s = column_series(p, k);
        const auto prof = diurnal_factors(s.obs, statistic_from_string(statistic));
        InstrumentSeries a{s.name, diurnal_adjust(s.obs, prof)};
        const auto rep = winsorize_top(a.obs, winsor_tail);
        std::cerr << s.name << ": clipped " << rep.clipped << " values above " << rep.threshold << '\n';
        adj.push_back(std::move(a));
      }
      std::ostringstream os;
      write_panel_csv(os, build_panel(adj));
      write_file(out_path, os.str());
    } else if (*fit_uni) {
      const Panel p = load_panel(panel_path);
      nlohmann::json out = nlohmann::json::array();
      for (std::size_t k = 0; k < p.cols(); ++k) {
        if (!instrument.empty() && p.columns[k].name != instrument) continue;
        const auto& c = p.columns[k];
        const FitResult f = fit_logmem(MemData{c.values, c.neg_return, {}}, uni_flags.spec(), uni_flags.options());
        if (!f.converged) exit_code = 1;
        out.push_back(fit_to_json(f, c.name));
      }
      if (out.empty()) throw SchemaError("panel has no instrument '" + instrument + "'");
      write_file(out_path, (out.size() == 1 ? out[0] : out).dump(2) + "\n");
    } else if (*fit_multi || *fit_intraday) {
      const Panel p = load_panel(panel_path);
      VFitOptions vo;
      vo.level = level;
      vo.zones = static_cast<bool>(*fit_intraday);
      vo.cross_terms = !restricted;
      vo.fit = multi_flags.options();
      const VFitResult f = fit_vlogmem(p, multi_flags.spec(), vo);
      for (const auto& d : f.diagnostics) std::cerr << "diagnostic: " << d << '\n';
      if (!f.all_converged()) exit_code = 1;
      write_file(out_path, vfit_to_json(f).dump(2) + "\n");
    } else if (*spill) {
      const VFitResult f = vfit_from_json(load_json(fit_path));
      const double lvl = spill_level->count() ? level : f.level;
      const SpilloverSummary ss = spillover_summary(f, lvl);
      nlohmann::json j{{"schema_version", 1},
                       {"instruments", f.instruments},
                       {"significance_level", lvl},
                       {"to", std::vector<double>(ss.to_sums.data(), ss.to_sums.data() + ss.to_sums.size())},
                       {"from", std::vector<double>(ss.from_sums.data(), ss.from_sums.data() + ss.from_sums.size())},
                       {"total_offdiag_abs", ss.total_offdiag_abs}};
      write_file(out_path, j.dump(2) + "\n");
    } else if (*shock) {
      const VFitResult f = vfit_from_json(load_json(fit_path));
      const std::size_t src = f.index_of(source);
      Shock sh = Shock::multiplier(multiplier);
      if (one_sd || !mult_opt->count()) sh = Shock::one_sd(f.params.s(static_cast<Eigen::Index>(src)));
      write_file(out_path, percent_table(f.instruments, shock_response(f, source, sh)));
    } else if (*simulate) {
      std::ostringstream os;
      if (kind == "ticks") {
        tcfg.seed = sim_seed;
        if (!start_str.empty()) tcfg.start_s = parse_time(nlohmann::json(start_str));
        write_ticks_csv(os, simulate_ticks(tcfg));
      } else {
        ParamSet ps;
        ps.omega = omega;
        ps.alpha = {alpha};
        ps.alpha0 = {0.0};
        ps.gamma = gamma;
        ps.beta = {beta};
        ps.s = s;
        ps.p_plus = p_plus;
        const MemSimulation sim = simulate_logmem(ps, MemSpec{}, T, sim_seed);
        for (const auto& w : sim.warnings) std::cerr << "warning: " << w << '\n';
        os << "t,value,neg_return\n";
        for (std::size_t t = 0; t < sim.x.size(); ++t)
          os << t << ',' << format_double(sim.x[t]) << ',' << int(sim.neg_return[t]) << '\n';
      }
      write_file(out_path, os.str());
    } else if (*exp_flow) {
      const VFitResult f = vfit_from_json(load_json(fit_path));
      const double lvl = flow_level->count() ? level : f.level;
      write_file(out_path, flow_graph_to_json(export_flow_graph(f, lvl)).dump(2) + "\n");
    } else if (*exp_prof) {
      const Panel p = load_panel(panel_path);
      const InstrumentSeries ser = column_series(p, p.index_of(instrument));
      std::ostringstream os;
      write_profile_csv(os, intraday_profile(ser.obs, statistic_from_string(statistic)));
      write_file(out_path, os.str());
    } else if (*exp_hist) {
      const Panel b = load_panel(panel_path), a = load_panel(after_path);
      const auto& vb = b.columns[b.index_of(instrument)].values;
      const auto& va = a.columns[a.index_of(instrument)].values;
      std::ostringstream os;
      write_histogram_csv(os, export_histogram(vb, va, hopt));
      write_file(out_path, os.str());
    } else if (*run) {
      RunConfig cfg = load_run_config(config_path);
      if (seed_opt->count()) {
        cfg.seed = run_seed;
        cfg.source["seed"] = run_seed;
      }
      if (!out_dir.empty()) {
        cfg.output_dir = std::filesystem::absolute(out_dir).string();
      }
      const RunResult r = run_pipeline(cfg);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "wrote " << r.artifacts.size() << " artifacts to " << r.output_dir.string() << '\n';
      exit_code = r.exit_code;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const EstimationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (exit_code == 1) std::cerr << "warning: estimation did not converge; results are flagged\n";
  return exit_code;
}
