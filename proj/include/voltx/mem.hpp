#pragma once

// Univariate logarithmic multiplicative error model, LogMEM(p,q), with zero
// augmentation, asymmetric response and optional exogenous regressors.
//
//   x_t = mu_t * eps_t,   E[eps_t] = 1
//   log mu_t = omega + sum_j alpha_j  log x_{t-j} 1{x_{t-j} > 0}
//                    + sum_j alpha0_j 1{x_{t-j} = 0}
//                    + gamma log x^-_{t-1}
//                    + sum_j beta_j log mu_{t-j}
//                    + sum_k c_k z_{k,t}
//
// eps_t is zero with probability 1 - p+ and log-normal(m, s) otherwise, with
// m = -s^2/2 - log p+ so that the innovation has unit mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voltx/common.hpp"
#include "voltx/optim.hpp"
#include "voltx/rng.hpp"

namespace voltx {

enum class PPlusPolicy { empirical, fixed };

struct MemSpec {
  int p = 1;  // short-term lags
  int q = 1;  // long-term lags
  bool asymmetry = true;
  bool zero_augmented = true;
  PPlusPolicy p_plus_policy = PPlusPolicy::empirical;
  double p_plus_value = 1.0;  // used when the policy is fixed

  int burn() const { return std::max(p, q); }

  void validate() const {
    if (p < 1 || q < 1) throw DomainError("LogMEM lag orders must be >= 1");
    if (p_plus_policy == PPlusPolicy::fixed && !(p_plus_value > 0.0 && p_plus_value <= 1.0))
      throw DomainError("p_plus must lie in (0, 1]");
  }

  std::string label() const {
    return "LogMEM(" + std::to_string(p) + "," + std::to_string(q) + ")";
  }
};

/// Regressor entering log mu_t with value `values[t]` (already lagged).
struct ExogRegressor {
  std::string name;
  std::vector<double> values;
};

struct MemData {
  std::vector<double> x;
  std::vector<std::uint8_t> neg_return;  // per-interval negative-return flag; may be empty
  std::vector<ExogRegressor> exog;

  std::size_t size() const { return x.size(); }
};

struct ParamSet {
  double omega = 0.0;
  std::vector<double> alpha;
  std::vector<double> alpha0;
  double gamma = 0.0;
  std::vector<double> beta;
  std::vector<double> exog;
  double s = 1.0;
  double p_plus = 1.0;

  double alpha_sum() const {
    double a = 0.0;
    for (double v : alpha) a += v;
    return a;
  }
  double beta_sum() const {
    double b = 0.0;
    for (double v : beta) b += v;
    return b;
  }
};

/// Positions of each parameter in the flat vector
/// [omega, alpha_1..p, alpha0_1..p, gamma, beta_1..q, c_1..m, s].
struct ParamLayout {
  int p = 1, q = 1, m = 0;

  std::size_t size() const { return static_cast<std::size_t>(3 + 2 * p + q + m); }
  std::size_t omega() const { return 0; }
  std::size_t alpha(int j) const { return static_cast<std::size_t>(1 + j); }
  std::size_t alpha0(int j) const { return static_cast<std::size_t>(1 + p + j); }
  std::size_t gamma() const { return static_cast<std::size_t>(1 + 2 * p); }
  std::size_t beta(int j) const { return static_cast<std::size_t>(2 + 2 * p + j); }
  std::size_t exog(int k) const { return static_cast<std::size_t>(2 + 2 * p + q + k); }
  std::size_t s() const { return static_cast<std::size_t>(2 + 2 * p + q + m); }

  std::vector<std::string> names(const std::vector<ExogRegressor>& ex) const {
    std::vector<std::string> n(size());
    n[omega()] = "omega";
    for (int j = 0; j < p; ++j) {
      n[alpha(j)] = "alpha[" + std::to_string(j + 1) + "]";
      n[alpha0(j)] = "alpha0[" + std::to_string(j + 1) + "]";
    }
    n[gamma()] = "gamma";
    for (int j = 0; j < q; ++j) n[beta(j)] = "beta[" + std::to_string(j + 1) + "]";
    for (int k = 0; k < m; ++k) n[exog(k)] = ex[static_cast<std::size_t>(k)].name;
    n[s()] = "s";
    return n;
  }
};

inline std::vector<double> pack(const ParamSet& ps, const ParamLayout& lay) {
  std::vector<double> th(lay.size(), 0.0);
  th[lay.omega()] = ps.omega;
  for (int j = 0; j < lay.p; ++j) {
    th[lay.alpha(j)] = j < static_cast<int>(ps.alpha.size()) ? ps.alpha[j] : 0.0;
    th[lay.alpha0(j)] = j < static_cast<int>(ps.alpha0.size()) ? ps.alpha0[j] : 0.0;
  }
  th[lay.gamma()] = ps.gamma;
  for (int j = 0; j < lay.q; ++j) th[lay.beta(j)] = j < static_cast<int>(ps.beta.size()) ? ps.beta[j] : 0.0;
  for (int k = 0; k < lay.m; ++k) th[lay.exog(k)] = k < static_cast<int>(ps.exog.size()) ? ps.exog[k] : 0.0;
  th[lay.s()] = ps.s;
  return th;
}

inline ParamSet unpack(std::span<const double> th, const ParamLayout& lay, double p_plus) {
  ParamSet ps;
  ps.omega = th[lay.omega()];
  for (int j = 0; j < lay.p; ++j) {
    ps.alpha.push_back(th[lay.alpha(j)]);
    ps.alpha0.push_back(th[lay.alpha0(j)]);
  }
  ps.gamma = th[lay.gamma()];
  for (int j = 0; j < lay.q; ++j) ps.beta.push_back(th[lay.beta(j)]);
  for (int k = 0; k < lay.m; ++k) ps.exog.push_back(th[lay.exog(k)]);
  ps.s = th[lay.s()];
  ps.p_plus = p_plus;
  return ps;
}

inline ParamLayout layout_for(const MemSpec& spec, const MemData& data) {
  return ParamLayout{spec.p, spec.q, static_cast<int>(data.exog.size())};
}

namespace detail {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Precomputed regressors and the likelihood/gradient recursion.
class LogMemEngine {
 public:
  LogMemEngine(const MemData& data, const MemSpec& spec)
      : data_(data), spec_(spec), lay_(layout_for(spec, data)) {
    const std::size_t T = data.x.size();
    if (!data.neg_return.empty() && data.neg_return.size() != T)
      throw DomainError("neg_return length does not match the series");
    for (const auto& e : data.exog)
      if (e.values.size() != T) throw DomainError("regressor " + e.name + " has the wrong length");
    L_.resize(T);
    Z_.resize(T);
    N_.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double x = data.x[t];
      if (!std::isfinite(x) || x < 0.0)
        throw DomainError("observation " + std::to_string(t) + " is not a finite non-negative value");
      const bool pos = x > 0.0;
      L_[t] = pos ? std::log(x) : 0.0;
      Z_[t] = pos ? 0.0 : 1.0;
      const bool neg = !data.neg_return.empty() && data.neg_return[t] != 0;
      N_[t] = (pos && neg) ? L_[t] : 0.0;
    }
  }

  const ParamLayout& layout() const { return lay_; }
  std::size_t n_obs() const {
    const auto b = static_cast<std::size_t>(spec_.burn());
    return data_.x.size() > b ? data_.x.size() - b : 0;
  }
  const std::vector<double>& L() const { return L_; }
  const std::vector<double>& Z() const { return Z_; }
  const std::vector<double>& N() const { return N_; }

  /// Summed log-likelihood over t >= burn. Optionally fills the full
  /// gradient (layout order, natural s), the per-observation contributions
  /// (zero inside the burn-in) and the log conditional means.
  double evaluate(std::span<const double> th, double p_plus, std::vector<double>* grad = nullptr,
                  std::vector<double>* contrib = nullptr,
                  std::vector<double>* log_mu_out = nullptr) const {
    const std::size_t T = data_.x.size();
    const int p = lay_.p, q = lay_.q, m = lay_.m;
    const auto burn = static_cast<std::size_t>(spec_.burn());
    const std::size_t P = lay_.size();
    const double s = th[lay_.s()];
    if (!(s > 0.0) || !(p_plus > 0.0 && p_plus <= 1.0)) return -std::numeric_limits<double>::infinity();
    const double mshift = -0.5 * s * s - std::log(p_plus);
    const double log_pp = std::log(p_plus);
    const double log_zero = p_plus < 1.0 ? std::log1p(-p_plus) : -std::numeric_limits<double>::infinity();
    const double log_s = std::log(s);
    const double inv_s2 = 1.0 / (s * s);

    std::vector<double> log_mu(T, 0.0);
    const std::size_t ring = static_cast<std::size_t>(q) + 1;
    std::vector<double> D;
    if (grad) {
      grad->assign(P, 0.0);
      D.assign(ring * P, 0.0);
    }
    if (contrib) contrib->assign(T, 0.0);

    double ll = 0.0;
    for (std::size_t t = burn; t < T; ++t) {
      double v = th[lay_.omega()];
      for (int j = 0; j < p; ++j) {
        v += th[lay_.alpha(j)] * L_[t - 1 - j] + th[lay_.alpha0(j)] * Z_[t - 1 - j];
      }
      v += th[lay_.gamma()] * N_[t - 1];
      for (int j = 0; j < q; ++j) v += th[lay_.beta(j)] * log_mu[t - 1 - j];
      for (int k = 0; k < m; ++k) v += th[lay_.exog(k)] * data_.exog[static_cast<std::size_t>(k)].values[t];
      if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
      log_mu[t] = v;

      double* Dt = nullptr;
      if (grad) {
        Dt = &D[(t % ring) * P];
        std::fill(Dt, Dt + P, 0.0);
        Dt[lay_.omega()] = 1.0;
        for (int j = 0; j < p; ++j) {
          Dt[lay_.alpha(j)] = L_[t - 1 - j];
          Dt[lay_.alpha0(j)] = Z_[t - 1 - j];
        }
        Dt[lay_.gamma()] = N_[t - 1];
        for (int j = 0; j < q; ++j) Dt[lay_.beta(j)] = log_mu[t - 1 - j];
        for (int k = 0; k < m; ++k) Dt[lay_.exog(k)] = data_.exog[static_cast<std::size_t>(k)].values[t];
        for (int j = 0; j < q; ++j) {
          if (t - 1 - j < burn) continue;
          const double b = th[lay_.beta(j)];
          const double* Dprev = &D[((t - 1 - j) % ring) * P];
          for (std::size_t i = 0; i < P; ++i) Dt[i] += b * Dprev[i];
        }
      }

      double l;
      if (Z_[t] == 0.0) {
        const double u = L_[t] - v - mshift;
        l = log_pp - L_[t] - log_s - kHalfLog2Pi - 0.5 * u * u * inv_s2;
        if (grad) {
          const double w = u * inv_s2;
          for (std::size_t i = 0; i < P; ++i) (*grad)[i] += w * Dt[i];
          (*grad)[lay_.s()] += -1.0 / s - u / s + u * u * inv_s2 / s;
        }
      } else {
        if (p_plus >= 1.0)
          throw EstimationError("zero observation at index " + std::to_string(t) +
                                " has probability zero under p_plus = 1");
        l = log_zero;
      }
      if (contrib) (*contrib)[t] = l;
      ll += l;
    }
    if (log_mu_out) *log_mu_out = std::move(log_mu);
    return ll;
  }

 private:
  const MemData& data_;
  MemSpec spec_;
  ParamLayout lay_;
  std::vector<double> L_, Z_, N_;
};

}  // namespace detail

/// Log conditional means; log mu_t = 0 for t < max(p, q).
inline std::vector<double> logmem_log_filter(const ParamSet& ps, const MemData& data,
                                             const MemSpec& spec) {
  spec.validate();
  if (data.x.size() <= static_cast<std::size_t>(spec.burn()))
    throw DomainError("series must be longer than max(p, q)");
  detail::LogMemEngine eng(data, spec);
  const auto th = pack(ps, eng.layout());
  std::vector<double> lm;
  // p_plus does not affect the recursion; 0.5 avoids the zero-probability guard.
  const double ll = eng.evaluate(th, 0.5, nullptr, nullptr, &lm);
  if (lm.empty() || !std::isfinite(ll)) throw DomainError("conditional mean recursion diverged");
  return lm;
}

/// Conditional means mu_t > 0.
inline std::vector<double> logmem_filter(const ParamSet& ps, const MemData& data,
                                         const MemSpec& spec) {
  auto lm = logmem_log_filter(ps, data, spec);
  for (double& v : lm) v = std::exp(v);
  return lm;
}

/// Log density of one observation under the zero-augmented log-normal with
/// conditional mean mu.
inline double zaln_contribution(double x, double mu, double s, double p_plus) {
  if (!(s > 0.0)) throw DomainError("s must be positive");
  if (!(p_plus > 0.0 && p_plus <= 1.0)) throw DomainError("p_plus must lie in (0, 1]");
  if (!(mu > 0.0)) throw DomainError("mu must be positive");
  if (x == 0.0) {
    if (p_plus >= 1.0) throw EstimationError("zero observation has probability zero under p_plus = 1");
    return std::log1p(-p_plus);
  }
  const double m = -0.5 * s * s - std::log(p_plus);
  const double u = std::log(x / mu) - m;
  return std::log(p_plus) - std::log(x) - std::log(s) - detail::kHalfLog2Pi - u * u / (2.0 * s * s);
}

/// Sum of contributions for t >= burn.
inline double zaln_loglik(std::span<const double> x, std::span<const double> mu, double s,
                          double p_plus, std::size_t burn = 1) {
  if (x.size() != mu.size()) throw DomainError("x and mu differ in length");
  double ll = 0.0;
  for (std::size_t t = burn; t < x.size(); ++t) {
    try {
      ll += zaln_contribution(x[t], mu[t], s, p_plus);
    } catch (const EstimationError&) {
      throw EstimationError("zero observation at index " + std::to_string(t) +
                            " has probability zero under p_plus = 1");
    }
  }
  return ll;
}

inline double empirical_p_plus(std::span<const double> x) {
  if (x.empty()) return 1.0;
  std::size_t pos = 0;
  for (double v : x) pos += v > 0.0 ? 1 : 0;
  return static_cast<double>(pos) / static_cast<double>(x.size());
}

inline double resolve_p_plus(const MemSpec& spec, std::span<const double> x) {
  return spec.p_plus_policy == PPlusPolicy::fixed ? spec.p_plus_value : empirical_p_plus(x);
}

/// Summed log-likelihood of a parameter set (burn-in excluded).
inline double logmem_loglik(const ParamSet& ps, const MemData& data, const MemSpec& spec) {
  detail::LogMemEngine eng(data, spec);
  return eng.evaluate(pack(ps, eng.layout()), ps.p_plus);
}

/// Analytic gradient of the summed log-likelihood in layout order.
inline std::vector<double> logmem_gradient(const ParamSet& ps, const MemData& data,
                                           const MemSpec& spec) {
  detail::LogMemEngine eng(data, spec);
  std::vector<double> g;
  eng.evaluate(pack(ps, eng.layout()), ps.p_plus, &g);
  return g;
}

// ---- scalar summaries ----------------------------------------------------------

/// Minutes for a log-mean deviation to halve; +inf when alpha + beta >= 1.
inline double half_life(double alpha_sum, double beta_sum, double interval_minutes = kIntervalMinutes) {
  const double persistence = alpha_sum + beta_sum;
  if (!(persistence > 0.0)) throw DomainError("half_life: persistence must be positive");
  if (persistence >= 1.0) return std::numeric_limits<double>::infinity();
  return interval_minutes * std::log(0.5) / std::log(persistence);
}

inline double bic(double loglik, int k, double T) {
  if (!(T > 0.0)) throw DomainError("bic: sample size must be positive");
  return static_cast<double>(k) * std::log(T) - 2.0 * loglik;
}

// ---- fitting -------------------------------------------------------------------

struct FitOptions {
  int starts = 3;  // default start plus (starts - 1) perturbed copies
  std::uint64_t seed = 0;
  double perturbation = 0.1;
  std::map<std::string, double> fixed;  // parameter name -> held value
  std::map<std::string, double> start;  // parameter name -> start value
  OptimOptions optim{};
  std::size_t min_length = 500;
  bool compute_se = true;
};

struct FitResult {
  MemSpec spec;
  ParamSet params;
  std::vector<std::string> names;
  std::vector<double> estimates;
  std::vector<std::uint8_t> free;
  std::vector<double> robust_se;   // NaN for fixed parameters
  std::vector<double> hessian_se;  // inverse-Hessian standard errors
  std::vector<double> pvalues;     // two-sided, from robust SEs
  Eigen::MatrixXd robust_cov;      // layout order, zero rows for fixed parameters
  double loglik = std::nan("");
  double bic = std::nan("");
  int k = 0;
  std::size_t n_obs = 0;
  double half_life_minutes = std::nan("");
  bool stationary = false;
  bool converged = false;
  bool unidentified = false;
  int iterations = 0;
  int evaluations = 0;
  int starts_run = 0;
  std::string message;
  std::string se_error;

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw DomainError("no parameter named " + name);
  }
  double value(const std::string& name) const { return estimates[index(name)]; }
  double se(const std::string& name) const { return robust_se[index(name)]; }
  double pvalue(const std::string& name) const { return pvalues[index(name)]; }
  bool is_free(const std::string& name) const { return free[index(name)] != 0; }
};

struct RobustSe {
  std::vector<double> robust_se;
  std::vector<double> hessian_se;
  Eigen::MatrixXd cov;  // layout order
  double hessian_condition = std::nan("");
};

namespace detail {

inline std::vector<std::uint8_t> free_mask(const detail::LogMemEngine& eng, const MemSpec& spec,
                                           const MemData& data,
                                           const std::map<std::string, double>& fixed,
                                           const std::vector<std::string>& names) {
  const auto& lay = eng.layout();
  const std::size_t T = data.x.size();
  const auto burn = static_cast<std::size_t>(spec.burn());
  auto any_nonzero = [&](const std::vector<double>& v, std::size_t lag) {
    for (std::size_t t = burn; t < T; ++t)
      if (v[t - lag] != 0.0) return true;
    return false;
  };
  std::vector<std::uint8_t> fr(lay.size(), 1);
  for (int j = 0; j < lay.p; ++j)
    if (!spec.zero_augmented || !any_nonzero(eng.Z(), static_cast<std::size_t>(j + 1)))
      fr[lay.alpha0(j)] = 0;
  if (!spec.asymmetry || !any_nonzero(eng.N(), 1)) fr[lay.gamma()] = 0;
  for (int k = 0; k < lay.m; ++k)
    if (!any_nonzero(data.exog[static_cast<std::size_t>(k)].values, 0)) fr[lay.exog(k)] = 0;
  for (const auto& [name, value] : fixed) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DomainError("cannot fix unknown parameter " + name);
    fr[static_cast<std::size_t>(it - names.begin())] = 0;
  }
  return fr;
}

}  // namespace detail

/// Sandwich covariance H^-1 S H^-1 / n from a numerical Hessian of the mean
/// log-likelihood and numerically differentiated per-observation scores.
/// Central differences with step 1e-5 (1 + |theta|).
inline RobustSe robust_se(const FitResult& fit, const MemData& data) {
  detail::LogMemEngine eng(data, fit.spec);
  const auto& lay = eng.layout();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fit.free.size(); ++i)
    if (fit.free[i]) idx.push_back(i);
  const auto k = static_cast<Eigen::Index>(idx.size());
  const auto n = static_cast<double>(eng.n_obs());
  const std::size_t T = data.x.size();
  const double pp = fit.params.p_plus;
  if (k == 0) throw EstimationError("robust_se: no free parameters");

  Eigen::MatrixXd H(k, k);
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(T), k);
  std::vector<double> th = fit.estimates, gp, gm, cp, cm;
  for (Eigen::Index a = 0; a < k; ++a) {
    const std::size_t i = idx[static_cast<std::size_t>(a)];
    const double h = 1e-5 * (1.0 + std::fabs(fit.estimates[i]));
    th[i] = fit.estimates[i] + h;
    const double lp = eng.evaluate(th, pp, &gp, &cp);
    th[i] = fit.estimates[i] - h;
    const double lm = eng.evaluate(th, pp, &gm, &cm);
    th[i] = fit.estimates[i];
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw EstimationError("robust_se: likelihood not finite near the estimate");
    for (Eigen::Index b = 0; b < k; ++b)
      H(b, a) = (gp[idx[static_cast<std::size_t>(b)]] - gm[idx[static_cast<std::size_t>(b)]]) / (2.0 * h) / n;
    for (std::size_t t = 0; t < T; ++t)
      scores(static_cast<Eigen::Index>(t), a) = (cp[t] - cm[t]) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::MatrixXd S = scores.transpose() * scores / n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-H);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  const double lmin = ev.minCoeff();
  RobustSe out;
  out.hessian_condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > 1e-12 * lmax) || !std::isfinite(out.hessian_condition) || out.hessian_condition > 1e12)
    throw EstimationError("robust_se: Hessian is singular or indefinite (condition number " +
                          std::to_string(out.hessian_condition) + ")");
  const Eigen::MatrixXd Hinv =
      -(es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose());
  const Eigen::MatrixXd V = Hinv * S * Hinv / n;

  out.robust_se.assign(lay.size(), std::nan(""));
  out.hessian_se.assign(lay.size(), std::nan(""));
  out.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lay.size()), static_cast<Eigen::Index>(lay.size()));
  for (Eigen::Index a = 0; a < k; ++a) {
    const std::size_t i = idx[static_cast<std::size_t>(a)];
    out.robust_se[i] = std::sqrt(std::max(V(a, a), 0.0));
    out.hessian_se[i] = std::sqrt(std::max(-Hinv(a, a) / n, 0.0));
    for (Eigen::Index b = 0; b < k; ++b)
      out.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)])) = V(a, b);
  }
  return out;
}

/// Quasi-maximum-likelihood fit. p+ is held at its policy value; s is
/// optimised on the log scale.
inline FitResult fit_logmem(const MemData& data, const MemSpec& spec, const FitOptions& opt = {}) {
  spec.validate();
  const std::size_t T = data.x.size();
  if (T < opt.min_length)
    throw DomainError("fit_logmem: need at least " + std::to_string(opt.min_length) +
                      " observations, got " + std::to_string(T));
  detail::LogMemEngine eng(data, spec);
  const ParamLayout lay = eng.layout();

  FitResult res;
  res.spec = spec;
  res.names = lay.names(data.exog);
  res.n_obs = eng.n_obs();
  const double pp = resolve_p_plus(spec, data.x);
  res.free = detail::free_mask(eng, spec, data, opt.fixed, res.names);

  const std::size_t P = lay.size();
  res.robust_se.assign(P, std::nan(""));
  res.hessian_se.assign(P, std::nan(""));
  res.pvalues.assign(P, std::nan(""));
  res.robust_cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));

  // Start values.
  std::vector<double> logs;
  for (double v : data.x)
    if (v > 0.0) logs.push_back(std::log(v));
  double mean_log = 0.0, sd_log = 0.0;
  for (double v : logs) mean_log += v;
  if (!logs.empty()) mean_log /= static_cast<double>(logs.size());
  for (double v : logs) sd_log += (v - mean_log) * (v - mean_log);
  if (logs.size() > 1) sd_log = std::sqrt(sd_log / static_cast<double>(logs.size() - 1));

  std::vector<double> th0(P, 0.0);
  for (int j = 0; j < lay.p; ++j) th0[lay.alpha(j)] = 0.2 / lay.p;
  for (int j = 0; j < lay.q; ++j) th0[lay.beta(j)] = 0.6 / lay.q;
  th0[lay.s()] = sd_log;
  for (const auto& [name, v] : opt.start) th0[res.index(name)] = v;
  for (const auto& [name, v] : opt.fixed) th0[res.index(name)] = v;
  res.estimates = th0;
  res.params = unpack(th0, lay, pp);

  if (logs.size() < 2 || !(sd_log > 1e-12 * std::max(1.0, std::fabs(mean_log)))) {
    res.unidentified = true;
    res.message = "degenerate data: positive observations are constant";
    return res;
  }

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < P; ++i)
    if (res.free[i]) idx.push_back(i);
  const auto nf = static_cast<Eigen::Index>(idx.size());
  res.k = static_cast<int>(nf);
  const double nobs = static_cast<double>(res.n_obs);

  auto to_theta = [&](const Eigen::VectorXd& z, std::vector<double>& th) {
    for (Eigen::Index a = 0; a < nf; ++a) {
      const std::size_t i = idx[static_cast<std::size_t>(a)];
      th[i] = i == lay.s() ? std::exp(z(a)) : z(a);
    }
  };
  auto to_z = [&](const std::vector<double>& th) {
    Eigen::VectorXd z(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const std::size_t i = idx[static_cast<std::size_t>(a)];
      z(a) = i == lay.s() ? std::log(th[i]) : th[i];
    }
    return z;
  };

  auto objective = [&](std::vector<double>& th) {
    return [&eng, &th, &to_theta, &idx, &lay, nf, nobs, pp](const Eigen::VectorXd& z,
                                                            Eigen::VectorXd& g) {
      to_theta(z, th);
      std::vector<double> full;
      const double ll = eng.evaluate(th, pp, &full);
      if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
      g.resize(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const std::size_t i = idx[static_cast<std::size_t>(a)];
        g(a) = -full[i] / nobs * (i == lay.s() ? th[i] : 1.0);
      }
      return -ll / nobs;
    };
  };

  Rng rng(opt.seed, 0x51A27ULL);
  OptimResult best;
  std::vector<double> best_th;
  const int starts = std::max(1, opt.starts);
  for (int r = 0; r < starts; ++r) {
    std::vector<double> th = th0;
    if (r > 0) {
      for (std::size_t i : idx) {
        if (i == lay.s())
          th[i] *= std::exp(rng.uniform(-opt.perturbation, opt.perturbation));
        else
          th[i] += rng.uniform(-opt.perturbation, opt.perturbation);
      }
    }
    std::vector<double> work = th;
    auto fg = objective(work);
    OptimResult o = minimize_bfgs(fg, to_z(th), opt.optim);
    res.iterations += o.iterations;
    res.evaluations += o.evaluations;
    ++res.starts_run;
    const bool better = best_th.empty() || (o.converged && !best.converged) ||
                        (o.converged == best.converged && o.f < best.f);
    if (better && std::isfinite(o.f)) {
      best = o;
      best_th = th0;
      to_theta(o.x, best_th);
    }
  }

  if (best_th.empty()) {
    res.message = "objective not finite at any start";
    return res;
  }
  res.estimates = best_th;
  res.params = unpack(best_th, lay, pp);
  res.converged = best.converged;
  res.message = best.message;
  res.loglik = -best.f * nobs;
  res.bic = bic(res.loglik, res.k, nobs);
  const double persistence = res.params.alpha_sum() + res.params.beta_sum();
  res.stationary = persistence < 1.0;
  res.half_life_minutes = persistence > 0.0 ? half_life(res.params.alpha_sum(), res.params.beta_sum())
                                            : std::nan("");

  if (opt.compute_se && res.converged) {
    try {
      RobustSe se = robust_se(res, data);
      res.robust_se = se.robust_se;
      res.hessian_se = se.hessian_se;
      res.robust_cov = se.cov;
      for (std::size_t i = 0; i < P; ++i)
        if (res.free[i]) res.pvalues[i] = normal_two_sided_p(res.estimates[i] / res.robust_se[i]);
    } catch (const EstimationError& e) {
      res.se_error = e.what();
    }
  }
  return res;
}

// ---- serialization ---------------------------------------------------------------

inline constexpr int kFitSchemaVersion = 1;

namespace detail {
inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
inline double number_or_nan(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::nan("");
}
}  // namespace detail

inline nlohmann::json fit_to_json(const FitResult& f, const std::string& instrument = "") {
  using nlohmann::json;
  json j;
  j["schema_version"] = kFitSchemaVersion;
  if (!instrument.empty()) j["instrument"] = instrument;
  j["model"] = f.spec.label();
  j["spec"] = {{"p", f.spec.p},
               {"q", f.spec.q},
               {"asymmetry", f.spec.asymmetry},
               {"zero_augmented", f.spec.zero_augmented},
               {"p_plus_policy", f.spec.p_plus_policy == PPlusPolicy::empirical ? "empirical" : "fixed"}};
  json params = json::array();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    const double se = f.robust_se.empty() ? std::nan("") : f.robust_se[i];
    params.push_back({{"name", f.names[i]},
                      {"estimate", detail::finite_or_null(f.estimates.empty() ? std::nan("") : f.estimates[i])},
                      {"se", detail::finite_or_null(se)},
                      {"hessian_se", detail::finite_or_null(f.hessian_se.empty() ? std::nan("") : f.hessian_se[i])},
                      {"z", detail::finite_or_null(f.estimates.empty() ? std::nan("") : f.estimates[i] / se)},
                      {"pvalue", detail::finite_or_null(f.pvalues.empty() ? std::nan("") : f.pvalues[i])},
                      {"free", f.free.empty() ? false : f.free[i] != 0}});
  }
  j["parameters"] = params;
  j["p_plus"] = f.params.p_plus;
  j["loglik"] = detail::finite_or_null(f.loglik);
  j["bic"] = detail::finite_or_null(f.bic);
  j["k"] = f.k;
  j["n_obs"] = f.n_obs;
  j["half_life_minutes"] = detail::finite_or_null(f.half_life_minutes);
  j["stationary"] = f.stationary;
  j["convergence"] = {{"converged", f.converged},
                      {"unidentified", f.unidentified},
                      {"iterations", f.iterations},
                      {"evaluations", f.evaluations},
                      {"starts", f.starts_run},
                      {"message", f.message},
                      {"se_error", f.se_error}};
  return j;
}

}  // namespace voltx
