#pragma once

// Five-minute realised-volatility estimators on one-second returns.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voltx/common.hpp"
#include "voltx/ingest.hpp"

namespace voltx {

enum class Estimator { preavg, bpv, medrv, squared };

inline std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::preavg: return "preavg";
    case Estimator::bpv: return "bpv";
    case Estimator::medrv: return "medrv";
    case Estimator::squared: return "squared";
  }
  return "?";
}

inline Estimator estimator_from_string(const std::string& s) {
  if (s == "preavg") return Estimator::preavg;
  if (s == "bpv") return Estimator::bpv;
  if (s == "medrv") return Estimator::medrv;
  if (s == "squared") return Estimator::squared;
  throw SchemaError("unknown estimator '" + s + "' (expected preavg|bpv|medrv|squared)");
}

/// Intervals per year: 12 per hour, 24 hours, 365 days.
inline constexpr double kAnnualisationSquared = 12.0 * 24.0 * 365.0;
inline const double kAnnualisation = std::sqrt(kAnnualisationSquared);

/// Scaling constant of the median realised variance.
inline double medrv_constant() {
  return std::numbers::pi / (6.0 - 4.0 * std::numbers::sqrt3 + std::numbers::pi);
}

struct RvConfig {
  Estimator estimator = Estimator::preavg;
  double theta = 0.4;
  double activity_threshold = 0.20;
  double annualisation = kAnnualisation;
  bool debias = false;
  int n = kIntervalSeconds;
};

inline std::vector<std::string> config_warnings(const RvConfig& cfg) {
  std::vector<std::string> w;
  if (cfg.theta < 0.3 || cfg.theta > 0.6)
    w.push_back("theta " + std::to_string(cfg.theta) + " outside the usual [0.3, 0.6] band");
  if (cfg.activity_threshold < 0.0 || cfg.activity_threshold > 1.0)
    throw DomainError("activity threshold must lie in [0, 1]");
  if (cfg.n != kIntervalSeconds) w.push_back("non-default window length n=" + std::to_string(cfg.n));
  return w;
}

/// Pre-averaging bandwidth k_n = ceil(theta * sqrt(n)).
inline int bandwidth(double theta, int n) {
  if (theta <= 0.0 || n <= 0) throw DomainError("bandwidth: theta and n must be positive");
  // Guard against theta*sqrt(n) landing a hair above an integer.
  return static_cast<int>(std::ceil(theta * std::sqrt(static_cast<double>(n)) - 1e-12));
}

/// Tent weighting function g(x) = min(x, 1 - x).
inline double tent(double x) { return std::min(x, 1.0 - x); }

struct RvObservation {
  double value = 0.0;  // annualised volatility
  bool is_zeroed = false;
  bool interval_return_negative = false;
};

// ---- variance kernels (not annualised) -------------------------------------

/// Sum of squared pre-averaged returns over the n - k + 1 complete windows
/// rbar_t = sum_{j=1..k} g(j/k) r_{t+j}, with returns indexed 1..n.
/// With debias, scales by n / ((n - k + 1) * sum_j g(j/k)^2), which is
/// unbiased for i.i.d. noise-free returns.
inline double preaveraged_variance(std::span<const double> r, int k, bool debias = false) {
  const int n = static_cast<int>(r.size());
  if (k < 2 || k > n) throw DomainError("preaveraged_variance: bandwidth out of range");
  std::vector<double> g(static_cast<std::size_t>(k));
  double g2 = 0.0;
  for (int j = 1; j <= k; ++j) {
    g[j - 1] = tent(static_cast<double>(j) / k);
    g2 += g[j - 1] * g[j - 1];
  }
  double sum = 0.0;
  for (int t = 0; t <= n - k; ++t) {
    double rbar = 0.0;
    for (int j = 1; j <= k; ++j) rbar += g[j - 1] * r[t + j - 1];
    sum += rbar * rbar;
  }
  if (debias) sum *= static_cast<double>(n) / ((n - k + 1) * g2);
  return sum;
}

inline double bipower_variance(std::span<const double> r) {
  double sum = 0.0;
  for (std::size_t j = 1; j < r.size(); ++j) sum += std::fabs(r[j - 1]) * std::fabs(r[j]);
  return std::numbers::pi / 2.0 * sum;
}

inline double medrv_variance(std::span<const double> r) {
  double sum = 0.0;
  for (std::size_t j = 1; j + 1 < r.size(); ++j) {
    double a = std::fabs(r[j - 1]), b = std::fabs(r[j]), c = std::fabs(r[j + 1]);
    double med = std::max(std::min(a, b), std::min(std::max(a, b), c));
    sum += med * med;
  }
  return medrv_constant() * sum;
}

inline double squared_variance(std::span<const double> r) {
  double sum = 0.0;
  for (double x : r) sum += x * x;
  return sum;
}

// ---- per-window estimators ---------------------------------------------------

/// Zeroes the estimate when trades occurred in strictly less than the
/// threshold fraction of seconds.
inline RvObservation apply_activity_threshold(const ReturnWindow& w, const RvConfig& cfg,
                                              double raw) {
  RvObservation obs;
  obs.interval_return_negative = w.interval_return < 0.0;
  const double n = static_cast<double>(w.returns.empty() ? cfg.n : w.returns.size());
  if (static_cast<double>(w.active_seconds) / n < cfg.activity_threshold) {
    obs.is_zeroed = true;
    obs.value = 0.0;
  } else {
    obs.value = raw;
  }
  return obs;
}

namespace detail {

template <class Kernel>
std::optional<RvObservation> estimate_with(const ReturnWindow& w, const RvConfig& cfg,
                                           Kernel&& kernel) {
  if (!w.valid) return std::nullopt;
  if (static_cast<int>(w.returns.size()) != cfg.n)
    throw DomainError("window length " + std::to_string(w.returns.size()) +
                      " does not match configured n=" + std::to_string(cfg.n));
  RvObservation obs = apply_activity_threshold(w, cfg, 0.0);
  if (obs.is_zeroed) return obs;
  const double var = kernel(std::span<const double>(w.returns));
  obs.value = std::sqrt(std::max(var, 0.0)) * cfg.annualisation;
  return obs;
}

}  // namespace detail

inline std::optional<RvObservation> preaveraged_rv(const ReturnWindow& w, const RvConfig& cfg) {
  const int k = bandwidth(cfg.theta, cfg.n);
  return detail::estimate_with(
      w, cfg, [&](std::span<const double> r) { return preaveraged_variance(r, k, cfg.debias); });
}

inline std::optional<RvObservation> bipower_variation(const ReturnWindow& w, const RvConfig& cfg) {
  return detail::estimate_with(w, cfg, [](std::span<const double> r) { return bipower_variance(r); });
}

inline std::optional<RvObservation> med_rv(const ReturnWindow& w, const RvConfig& cfg) {
  return detail::estimate_with(w, cfg, [](std::span<const double> r) { return medrv_variance(r); });
}

inline std::optional<RvObservation> squared_rv(const ReturnWindow& w, const RvConfig& cfg) {
  return detail::estimate_with(w, cfg, [](std::span<const double> r) { return squared_variance(r); });
}

inline std::optional<RvObservation> estimate_rv(const ReturnWindow& w, const RvConfig& cfg) {
  switch (cfg.estimator) {
    case Estimator::preavg: return preaveraged_rv(w, cfg);
    case Estimator::bpv: return bipower_variation(w, cfg);
    case Estimator::medrv: return med_rv(w, cfg);
    case Estimator::squared: return squared_rv(w, cfg);
  }
  return std::nullopt;
}

}  // namespace voltx
