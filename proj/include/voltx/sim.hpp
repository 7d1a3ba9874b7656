#pragma once

// Seeded simulators for LogMEM / vLogMEM processes and tick-level price paths.
//
// Stream layout for a seed S: simulate_logmem draws from Rng(S, 0);
// simulate_vlogmem gives instrument i the stream Rng(S, i + 1); simulate_ticks
// uses Rng(S, 0x7C) for the path and Rng(S, 0x7D) for arrivals.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltx/common.hpp"
#include "voltx/ingest.hpp"
#include "voltx/mem.hpp"
#include "voltx/prep.hpp"
#include "voltx/rng.hpp"
#include "voltx/rvol.hpp"
#include "voltx/vmem.hpp"

namespace voltx {

/// Zero-augmented log-normal innovation with unit mean.
inline double draw_zaln(Rng& rng, double s, double p_plus) {
  const double z = rng.normal();
  if (p_plus < 1.0 && rng.uniform() >= p_plus) return 0.0;
  const double m = -0.5 * s * s - std::log(p_plus);
  return std::exp(m + s * z);
}

struct MemSimOptions {
  std::size_t burn_in = 1000;   // discarded leading draws
  double neg_probability = 0.5;
  bool co_simulate_returns = false;  // derive neg flags from a simulated interval return
};

struct MemSimulation {
  std::vector<double> x;
  std::vector<std::uint8_t> neg_return;
  std::vector<double> log_mu;
  std::vector<double> returns;  // filled when returns are co-simulated
  std::vector<std::string> warnings;

  MemData data() const { return MemData{x, neg_return, {}}; }
};

/// Runs the LogMEM recursion forward. Non-stationary parameters produce a
/// warning and the simulation proceeds.
inline MemSimulation simulate_logmem(const ParamSet& ps, const MemSpec& spec, std::size_t T,
                                     std::uint64_t seed, const MemSimOptions& opt = {}) {
  spec.validate();
  if (static_cast<int>(ps.alpha.size()) != spec.p || static_cast<int>(ps.beta.size()) != spec.q)
    throw DomainError("simulate_logmem: parameter lags do not match the spec");
  if (!ps.exog.empty()) throw DomainError("simulate_logmem: exogenous regressors are not simulated");
  if (!(ps.s >= 0.0) || !(ps.p_plus > 0.0 && ps.p_plus <= 1.0))
    throw DomainError("simulate_logmem: need s >= 0 and p_plus in (0, 1]");
  MemSimulation out;
  if (ps.alpha_sum() + ps.beta_sum() >= 1.0)
    out.warnings.push_back("alpha + beta >= 1: process is not stationary");

  Rng rng(seed, 0);
  const std::size_t total = T + opt.burn_in;
  const auto burn = static_cast<std::size_t>(spec.burn());
  std::vector<double> L(total, 0.0), Z(total, 0.0), N(total, 0.0), lm(total, 0.0), x(total, 0.0), r(total, 0.0);
  std::vector<std::uint8_t> neg(total, 0);
  const bool has_alpha0 = !ps.alpha0.empty();
  for (std::size_t t = 0; t < total; ++t) {
    double v = 0.0;
    if (t >= burn) {
      v = ps.omega;
      for (int j = 0; j < spec.p; ++j) {
        v += ps.alpha[static_cast<std::size_t>(j)] * L[t - 1 - static_cast<std::size_t>(j)];
        if (has_alpha0) v += ps.alpha0[static_cast<std::size_t>(j)] * Z[t - 1 - static_cast<std::size_t>(j)];
      }
      v += ps.gamma * N[t - 1];
      for (int j = 0; j < spec.q; ++j) v += ps.beta[static_cast<std::size_t>(j)] * lm[t - 1 - static_cast<std::size_t>(j)];
    }
    lm[t] = v;
    x[t] = std::exp(v) * draw_zaln(rng, ps.s, ps.p_plus);
    if (opt.co_simulate_returns) {
      r[t] = x[t] / kAnnualisation * rng.normal();
      neg[t] = r[t] < 0.0 ? 1 : 0;
    } else {
      neg[t] = rng.bernoulli(opt.neg_probability) ? 1 : 0;
    }
    const bool pos = x[t] > 0.0;
    L[t] = pos ? std::log(x[t]) : 0.0;
    Z[t] = pos ? 0.0 : 1.0;
    N[t] = pos && neg[t] ? L[t] : 0.0;
  }
  const auto b = static_cast<std::ptrdiff_t>(opt.burn_in);
  out.x.assign(x.begin() + b, x.end());
  out.neg_return.assign(neg.begin() + b, neg.end());
  out.log_mu.assign(lm.begin() + b, lm.end());
  if (opt.co_simulate_returns) out.returns.assign(r.begin() + b, r.end());
  return out;
}

struct VMemSimOptions {
  std::size_t burn_in = 1000;
  double neg_probability = 0.5;
  std::int64_t start_s = 0;  // timestamp of the first retained interval (zones)
  std::vector<std::string> names;  // defaults to X1..XK
};

struct VMemSimulation {
  std::vector<std::int64_t> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<std::uint8_t>> neg_return;
  std::vector<std::string> warnings;

  std::vector<InstrumentSeries> series() const {
    std::vector<InstrumentSeries> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
      InstrumentSeries s{names[i], {}};
      s.obs.reserve(times.size());
      for (std::size_t t = 0; t < times.size(); ++t) s.obs.push_back({times[t], x[i][t], neg_return[i][t] != 0});
      out.push_back(std::move(s));
    }
    return out;
  }
  Panel panel() const { return build_panel(series()); }
};

/// Simulates the vector recursion. Instrument i draws its innovations from
/// stream i + 1 of the seed, so its shocks are independent of the others'.
inline VMemSimulation simulate_vlogmem(const VParamSet& vp, std::size_t T, std::uint64_t seed,
                                       const VMemSimOptions& opt = {}) {
  vp.validate();
  const auto K = static_cast<std::size_t>(vp.K());
  const int p = vp.p(), q = vp.q();
  VMemSimulation out;
  out.names = opt.names;
  if (out.names.empty())
    for (std::size_t i = 0; i < K; ++i) out.names.push_back("X" + std::to_string(i + 1));
  if (out.names.size() != K) throw DomainError("simulate_vlogmem: names do not match the dimension");
  for (Eigen::Index i = 0; i < vp.K(); ++i) {
    double a = 0.0, b = 0.0;
    for (const auto& m : vp.A) a += m(i, i);
    for (const auto& v : vp.B) b += v(i);
    if (a + b >= 1.0) out.warnings.push_back("equation " + out.names[static_cast<std::size_t>(i)] + " is not stationary");
  }

  std::vector<Rng> rng;
  for (std::size_t i = 0; i < K; ++i) rng.emplace_back(seed, i + 1);
  const std::size_t total = T + opt.burn_in;
  const auto burn = static_cast<std::size_t>(std::max(p, q));
  std::vector<std::vector<double>> L(K, std::vector<double>(total, 0.0)), Z = L, N = L, lm = L, x = L;
  std::vector<std::vector<std::uint8_t>> neg(K, std::vector<std::uint8_t>(total, 0));
  const auto b = static_cast<std::int64_t>(opt.burn_in);
  for (std::size_t t = 0; t < total; ++t) {
    const std::int64_t ts = opt.start_s + (static_cast<std::int64_t>(t) - b) * kIntervalSeconds;
    for (std::size_t i = 0; i < K; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double v = 0.0;
      if (t >= burn) {
        v = vp.w(ii);
        for (std::size_t j = 0; j < K; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          for (int l = 0; l < p; ++l) {
            const std::size_t lag = t - 1 - static_cast<std::size_t>(l);
            v += vp.A[static_cast<std::size_t>(l)](ii, jj) * L[j][lag] + vp.A0[static_cast<std::size_t>(l)](ii, jj) * Z[j][lag];
          }
          v += vp.Gamma(ii, jj) * N[j][t - 1];
          if (vp.zone_A) v += (*vp.zone_A)[static_cast<std::size_t>(zone_of(ts))](ii, jj) * L[j][t - 1];
        }
        for (int l = 0; l < q; ++l) v += vp.B[static_cast<std::size_t>(l)](ii) * lm[i][t - 1 - static_cast<std::size_t>(l)];
      }
      lm[i][t] = v;
      x[i][t] = std::exp(v) * draw_zaln(rng[i], vp.s(ii), vp.p_plus(ii));
      neg[i][t] = rng[i].bernoulli(opt.neg_probability) ? 1 : 0;
    }
    for (std::size_t i = 0; i < K; ++i) {
      const bool pos = x[i][t] > 0.0;
      L[i][t] = pos ? std::log(x[i][t]) : 0.0;
      Z[i][t] = pos ? 0.0 : 1.0;
      N[i][t] = pos && neg[i][t] ? L[i][t] : 0.0;
    }
  }
  for (std::size_t t = 0; t < T; ++t) out.times.push_back(opt.start_s + static_cast<std::int64_t>(t) * kIntervalSeconds);
  for (std::size_t i = 0; i < K; ++i) {
    out.x.emplace_back(x[i].begin() + b, x[i].end());
    out.neg_return.emplace_back(neg[i].begin() + b, neg[i].end());
  }
  return out;
}

// ---- tick paths ----------------------------------------------------------------

inline constexpr double kSecondsPerYear = 31536000.0;

struct TickSimConfig {
  std::uint64_t seed = 0;
  std::int64_t start_s = 0;         // first interval start; a seed trade is placed at start_s - 1
  std::size_t intervals = 288;      // number of 300-second intervals
  double sigma_annual = 0.70;
  double jump_intensity = 0.0;      // expected jumps per second
  double jump_size = 0.0;           // absolute log jump, random sign
  double arrival_probability = 1.0; // chance that a second carries a trade
  double initial_price = 10000.0;
  std::vector<double> interval_vol_multiplier;  // optional, one per interval
  std::vector<double> slot_profile;             // optional, 288 volatility multipliers by slot

  void validate() const {
    if (!(sigma_annual >= 0.0)) throw DomainError("tick sim: sigma_annual must be non-negative");
    if (!(jump_intensity >= 0.0)) throw DomainError("tick sim: jump intensity must be non-negative");
    if (!(arrival_probability > 0.0 && arrival_probability <= 1.0))
      throw DomainError("tick sim: arrival probability must lie in (0, 1]");
    if (!(initial_price > 0.0)) throw DomainError("tick sim: initial price must be positive");
    if (!interval_vol_multiplier.empty() && interval_vol_multiplier.size() != intervals)
      throw DomainError("tick sim: one volatility multiplier per interval is required");
    if (!slot_profile.empty() && slot_profile.size() != static_cast<std::size_t>(kSlotsPerDay))
      throw DomainError("tick sim: slot profile needs 288 entries");
  }
  std::int64_t end_s() const { return start_s + static_cast<std::int64_t>(intervals) * kIntervalSeconds; }
};

/// One-second geometric diffusion observed through Bernoulli trade arrivals.
/// Each traded second carries one trade at the end-of-second price, with a
/// uniformly drawn sub-second offset.
inline TickSeries simulate_ticks(const TickSimConfig& cfg) {
  cfg.validate();
  Rng path(cfg.seed, 0x7C), arrive(cfg.seed, 0x7D);
  const double sd = cfg.sigma_annual / std::sqrt(kSecondsPerYear);
  TickSeries out;
  double logp = 0.0;  // log return since the seed trade
  auto emit = [&](std::int64_t sec) {
    const auto offset = static_cast<std::int64_t>(arrive.uniform() * 1e9);
    const double size = 0.001 + arrive.uniform();
    out.records.push_back({sec * 1'000'000'000LL + offset, cfg.initial_price * std::exp(logp), size});
  };
  emit(cfg.start_s - 1);
  for (std::size_t k = 0; k < cfg.intervals; ++k) {
    const std::int64_t s0 = cfg.start_s + static_cast<std::int64_t>(k) * kIntervalSeconds;
    double mult = cfg.interval_vol_multiplier.empty() ? 1.0 : cfg.interval_vol_multiplier[k];
    if (!cfg.slot_profile.empty()) mult *= cfg.slot_profile[static_cast<std::size_t>(slot_of(s0))];
    for (int i = 0; i < kIntervalSeconds; ++i) {
      logp += sd * mult * path.normal();
      if (cfg.jump_intensity > 0.0) {
        const int jumps = path.poisson(cfg.jump_intensity);
        for (int n = 0; n < jumps; ++n) logp += path.bernoulli(0.5) ? cfg.jump_size : -cfg.jump_size;
      }
      if (arrive.uniform() < cfg.arrival_probability) emit(s0 + i);
    }
  }
  return out;
}

inline void write_ticks_csv(std::ostream& os, const TickSeries& ticks) {
  os << "ts_ns,price,size\n";
  for (const auto& r : ticks.records) os << r.ts_ns << ',' << format_double(r.price) << ',' << format_double(r.size) << '\n';
}

inline void write_ticks_csv(const std::string& path, const TickSeries& ticks) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  write_ticks_csv(f, ticks);
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace voltx
