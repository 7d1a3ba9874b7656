#pragma once

// Vector LogMEM with diagonal B, estimated equation by equation: each
// instrument's conditional mean is a univariate LogMEM whose exogenous
// regressors are the lagged log-values (and zero indicators) of the others.
// Row i of every coefficient matrix is the equation of instrument i; column j
// is the lagged regressor from instrument j.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voltx/common.hpp"
#include "voltx/mem.hpp"
#include "voltx/prep.hpp"

namespace voltx {

inline constexpr std::array<Zone, 3> kZones{Zone::AS, Zone::EU, Zone::US};

struct VParamSet {
  Eigen::VectorXd w;
  std::vector<Eigen::MatrixXd> A;   // short-term lags 1..p
  std::vector<Eigen::MatrixXd> A0;  // zero-indicator lags 1..p
  Eigen::MatrixXd Gamma;            // asymmetry, diagonal unless cross terms enabled
  std::vector<Eigen::VectorXd> B;   // long-term lags 1..q, diagonal entries
  Eigen::VectorXd s;
  Eigen::VectorXd p_plus;
  std::optional<std::array<Eigen::MatrixXd, 3>> zone_A;  // lag-1 additions for AS, EU, US

  Eigen::Index K() const { return w.size(); }
  int p() const { return static_cast<int>(A.size()); }
  int q() const { return static_cast<int>(B.size()); }

  static VParamSet zeros(Eigen::Index K, int p = 1, int q = 1) {
    VParamSet v;
    v.w = Eigen::VectorXd::Zero(K);
    for (int l = 0; l < p; ++l) {
      v.A.push_back(Eigen::MatrixXd::Zero(K, K));
      v.A0.push_back(Eigen::MatrixXd::Zero(K, K));
    }
    v.Gamma = Eigen::MatrixXd::Zero(K, K);
    for (int l = 0; l < q; ++l) v.B.push_back(Eigen::VectorXd::Zero(K));
    v.s = Eigen::VectorXd::Constant(K, 0.3);
    v.p_plus = Eigen::VectorXd::Ones(K);
    return v;
  }

  void validate() const {
    const Eigen::Index k = K();
    if (k < 1 || A.empty() || A.size() != A0.size() || B.empty())
      throw DomainError("VParamSet: inconsistent lag structure");
    for (const auto& m : A)
      if (m.rows() != k || m.cols() != k) throw DomainError("VParamSet: A has wrong dimensions");
    for (const auto& m : A0)
      if (m.rows() != k || m.cols() != k) throw DomainError("VParamSet: A0 has wrong dimensions");
    for (const auto& b : B)
      if (b.size() != k) throw DomainError("VParamSet: B has wrong dimensions");
    if (Gamma.rows() != k || Gamma.cols() != k || s.size() != k || p_plus.size() != k)
      throw DomainError("VParamSet: dimension mismatch");
    if (zone_A)
      for (const auto& m : *zone_A)
        if (m.rows() != k || m.cols() != k) throw DomainError("VParamSet: zone matrix has wrong dimensions");
  }
};

struct CoefficientBlock {
  Eigen::MatrixXd estimate, se, pvalue;

  static CoefficientBlock zeros(Eigen::Index rows, Eigen::Index cols) {
    const double nan = std::nan("");
    return {Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Constant(rows, cols, nan),
            Eigen::MatrixXd::Constant(rows, cols, nan)};
  }
};

struct VFitOptions {
  bool zones = false;        // lag-1 zone interactions
  bool cross_terms = true;   // false holds every cross coefficient at zero
  bool cross_gamma = false;  // off-diagonal asymmetry terms
  double level = 0.01;
  FitOptions fit{};
};

struct VFitResult {
  std::vector<std::string> instruments;
  MemSpec spec;
  double level = 0.01;
  bool zones = false;
  VParamSet params;
  CoefficientBlock w;                  // K x 1
  std::vector<CoefficientBlock> A;     // per lag
  std::vector<CoefficientBlock> A0;    // per lag
  CoefficientBlock Gamma;
  std::vector<CoefficientBlock> B;     // per lag, K x 1
  std::optional<std::array<CoefficientBlock, 3>> zone_A;
  std::vector<FitResult> equations;
  std::vector<std::string> diagnostics;

  Eigen::Index K() const { return static_cast<Eigen::Index>(instruments.size()); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < instruments.size(); ++i)
      if (instruments[i] == name) return i;
    throw DomainError("fit has no instrument '" + name + "'");
  }

  /// 1 where the lag-1 A entry is significant at `lvl`.
  Eigen::MatrixXi significance(double lvl) const {
    const auto& P = A.front().pvalue;
    Eigen::MatrixXi sig = Eigen::MatrixXi::Zero(P.rows(), P.cols());
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      for (Eigen::Index j = 0; j < P.cols(); ++j) sig(i, j) = P(i, j) < lvl ? 1 : 0;
    return sig;
  }
  Eigen::MatrixXi significance() const { return significance(level); }

  bool all_converged() const {
    for (const auto& e : equations)
      if (!e.converged) return false;
    return true;
  }
};

namespace detail {

inline std::string coef_name(const std::string& block, int lag, const std::string& target,
                             const std::string& source) {
  std::string n = block;
  if (lag > 0) n += "[" + std::to_string(lag) + "]";
  return n + "(" + target + "," + source + ")";
}

inline std::string zone_coef_name(Zone z, const std::string& target, const std::string& source) {
  return std::string("A_") + to_string(z) + "(" + target + "," + source + ")";
}

struct ColumnRegressors {
  std::vector<double> L, Z, N;
  bool has_zero = false;
};

inline ColumnRegressors column_regressors(const PanelColumn& c) {
  ColumnRegressors r;
  const std::size_t T = c.values.size();
  r.L.resize(T);
  r.Z.resize(T);
  r.N.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double x = c.values[t];
    const bool pos = x > 0.0;
    r.L[t] = pos ? std::log(x) : 0.0;
    r.Z[t] = pos ? 0.0 : 1.0;
    r.N[t] = pos && c.neg_return[t] ? r.L[t] : 0.0;
    r.has_zero = r.has_zero || !pos;
  }
  return r;
}

inline std::vector<double> lagged(const std::vector<double>& v, int lag) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t t = static_cast<std::size_t>(lag); t < v.size(); ++t) out[t] = v[t - static_cast<std::size_t>(lag)];
  return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

/// Data for equation i: own series plus named cross regressors.
inline MemData equation_data(const Panel& panel, std::size_t i, const MemSpec& spec,
                             const VFitOptions& opt, const std::vector<ColumnRegressors>& regs) {
  MemData d;
  d.x = panel.columns[i].values;
  d.neg_return = panel.columns[i].neg_return;
  const auto& names = panel.columns;
  const std::string& target = names[i].name;
  const std::size_t K = panel.cols();
  for (int l = 1; l <= spec.p; ++l) {
    for (std::size_t j = 0; j < K; ++j) {
      if (j == i) continue;
      if (!(opt.zones && l == 1))
        d.exog.push_back({coef_name("A", l, target, names[j].name), lagged(regs[j].L, l)});
      if (spec.zero_augmented && regs[j].has_zero)
        d.exog.push_back({coef_name("A0", l, target, names[j].name), lagged(regs[j].Z, l)});
    }
  }
  if (opt.cross_gamma && spec.asymmetry)
    for (std::size_t j = 0; j < K; ++j)
      if (j != i) d.exog.push_back({coef_name("Gamma", 0, target, names[j].name), lagged(regs[j].N, 1)});
  if (opt.zones) {
    for (Zone z : kZones) {
      for (std::size_t j = 0; j < K; ++j) {
        std::vector<double> v = lagged(regs[j].L, 1);
        for (std::size_t t = 0; t < v.size(); ++t)
          if (panel.zones[t] != z) v[t] = 0.0;
        d.exog.push_back({zone_coef_name(z, target, names[j].name), std::move(v)});
      }
    }
  }
  return d;
}

inline void put(CoefficientBlock& b, Eigen::Index r, Eigen::Index c, const FitResult& f, std::size_t k) {
  b.estimate(r, c) = f.estimates[k];
  b.se(r, c) = f.robust_se[k];
  b.pvalue(r, c) = f.pvalues[k];
}

}  // namespace detail

/// Fits one LogMEM per instrument. With zones, the lag-1 short-term matrix
/// is estimated separately for each zone (E_AS, E_EU, E_US) and reported as
/// A = mean(E_z) plus zone deviations A_z = E_z - A, which sum to zero.
inline VFitResult fit_vlogmem(const Panel& panel, const MemSpec& spec, const VFitOptions& opt = {}) {
  spec.validate();
  const std::size_t K = panel.cols();
  if (K < 2) throw DomainError("fit_vlogmem: need at least two instruments");
  const auto Ki = static_cast<Eigen::Index>(K);

  std::vector<detail::ColumnRegressors> regs;
  for (const auto& c : panel.columns) regs.push_back(detail::column_regressors(c));

  VFitResult res;
  res.instruments = panel.instruments();
  res.spec = spec;
  res.level = opt.level;
  res.zones = opt.zones;

  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b) {
      const double r = detail::pearson(regs[a].L, regs[b].L);
      if (std::isfinite(r) && std::fabs(r) > 1.0 - 1e-9)
        res.diagnostics.push_back("perfect collinearity between " + panel.columns[a].name + " and " +
                                  panel.columns[b].name);
    }

  res.equations.resize(K);
  std::vector<MemData> data(K);
  for (std::size_t i = 0; i < K; ++i) data[i] = detail::equation_data(panel, i, spec, opt, regs);
  parallel_for(K, [&](std::size_t i) {
    FitOptions fo = opt.fit;
    const std::string& target = panel.columns[i].name;
    if (opt.zones) fo.fixed["alpha[1]"] = 0.0;
    if (!opt.cross_terms)
      for (const auto& e : data[i].exog)
        if (e.name.rfind("A_", 0) != 0) fo.fixed[e.name] = 0.0;
    (void)target;
    res.equations[i] = fit_logmem(data[i], spec, fo);
  });

  // Assemble matrices.
  auto& P = res.params;
  P = VParamSet::zeros(Ki, spec.p, spec.q);
  res.w = CoefficientBlock::zeros(Ki, 1);
  res.Gamma = CoefficientBlock::zeros(Ki, Ki);
  for (int l = 0; l < spec.p; ++l) {
    res.A.push_back(CoefficientBlock::zeros(Ki, Ki));
    res.A0.push_back(CoefficientBlock::zeros(Ki, Ki));
  }
  for (int l = 0; l < spec.q; ++l) res.B.push_back(CoefficientBlock::zeros(Ki, 1));
  std::array<CoefficientBlock, 3> effective{CoefficientBlock::zeros(Ki, Ki), CoefficientBlock::zeros(Ki, Ki),
                                            CoefficientBlock::zeros(Ki, Ki)};

  for (std::size_t i = 0; i < K; ++i) {
    const FitResult& f = res.equations[i];
    const auto r = static_cast<Eigen::Index>(i);
    const ParamLayout lay = layout_for(spec, data[i]);
    if (!f.converged) res.diagnostics.push_back("equation " + panel.columns[i].name + " did not converge: " + f.message);
    if (f.unidentified) res.diagnostics.push_back("equation " + panel.columns[i].name + " is unidentified");
    if (!f.se_error.empty()) res.diagnostics.push_back("equation " + panel.columns[i].name + ": " + f.se_error);
    detail::put(res.w, r, 0, f, lay.omega());
    for (int l = 0; l < spec.p; ++l) {
      detail::put(res.A[static_cast<std::size_t>(l)], r, r, f, lay.alpha(l));
      detail::put(res.A0[static_cast<std::size_t>(l)], r, r, f, lay.alpha0(l));
    }
    detail::put(res.Gamma, r, r, f, lay.gamma());
    for (int l = 0; l < spec.q; ++l) detail::put(res.B[static_cast<std::size_t>(l)], r, 0, f, lay.beta(l));
    P.s(r) = f.params.s;
    P.p_plus(r) = f.params.p_plus;

    for (std::size_t j = 0; j < K; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      const std::string& tgt = panel.columns[i].name;
      const std::string& src = panel.columns[j].name;
      for (int k = 0; k < lay.m; ++k) {
        const std::string& n = data[i].exog[static_cast<std::size_t>(k)].name;
        const std::size_t pos = lay.exog(k);
        for (int l = 1; l <= spec.p; ++l) {
          if (n == detail::coef_name("A", l, tgt, src)) detail::put(res.A[static_cast<std::size_t>(l - 1)], r, c, f, pos);
          if (n == detail::coef_name("A0", l, tgt, src)) detail::put(res.A0[static_cast<std::size_t>(l - 1)], r, c, f, pos);
        }
        if (n == detail::coef_name("Gamma", 0, tgt, src)) detail::put(res.Gamma, r, c, f, pos);
        for (std::size_t z = 0; z < 3; ++z)
          if (n == detail::zone_coef_name(kZones[z], tgt, src)) detail::put(effective[z], r, c, f, pos);
      }
    }

    if (opt.zones) {
      // Linear map from (E_AS, E_EU, E_US) to A and A_z, applied per entry
      // with the equation's robust covariance.
      if (!res.zone_A)
        res.zone_A = std::array<CoefficientBlock, 3>{CoefficientBlock::zeros(Ki, Ki), CoefficientBlock::zeros(Ki, Ki),
                                                     CoefficientBlock::zeros(Ki, Ki)};
      for (std::size_t j = 0; j < K; ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        std::array<std::size_t, 3> pos{};
        for (std::size_t z = 0; z < 3; ++z)
          for (int k = 0; k < lay.m; ++k)
            if (data[i].exog[static_cast<std::size_t>(k)].name ==
                detail::zone_coef_name(kZones[z], panel.columns[i].name, panel.columns[j].name))
              pos[z] = lay.exog(k);
        Eigen::Vector3d e;
        Eigen::Matrix3d C;
        for (int a = 0; a < 3; ++a) {
          e(a) = f.estimates[pos[static_cast<std::size_t>(a)]];
          for (int b = 0; b < 3; ++b)
            C(a, b) = f.robust_cov(static_cast<Eigen::Index>(pos[static_cast<std::size_t>(a)]),
                                   static_cast<Eigen::Index>(pos[static_cast<std::size_t>(b)]));
        }
        const bool have_se = std::isfinite(f.robust_se[pos[0]]);
        auto fill = [&](CoefficientBlock& blk, const Eigen::Vector3d& v) {
          blk.estimate(r, c) = v.dot(e);
          const double se = have_se ? std::sqrt(std::max(v.dot(C * v), 0.0)) : std::nan("");
          blk.se(r, c) = se;
          blk.pvalue(r, c) = have_se ? normal_two_sided_p(blk.estimate(r, c) / se) : std::nan("");
        };
        const Eigen::Vector3d mean_w = Eigen::Vector3d::Constant(1.0 / 3.0);
        fill(res.A[0], mean_w);
        for (int z = 0; z < 3; ++z) {
          Eigen::Vector3d v = -mean_w;
          v(z) += 1.0;
          fill((*res.zone_A)[static_cast<std::size_t>(z)], v);
        }
      }
    }
  }

  for (int l = 0; l < spec.p; ++l) {
    P.A[static_cast<std::size_t>(l)] = res.A[static_cast<std::size_t>(l)].estimate;
    P.A0[static_cast<std::size_t>(l)] = res.A0[static_cast<std::size_t>(l)].estimate;
  }
  for (int l = 0; l < spec.q; ++l) P.B[static_cast<std::size_t>(l)] = res.B[static_cast<std::size_t>(l)].estimate.col(0);
  P.w = res.w.estimate.col(0);
  P.Gamma = res.Gamma.estimate;
  if (res.zone_A) P.zone_A = std::array<Eigen::MatrixXd, 3>{(*res.zone_A)[0].estimate, (*res.zone_A)[1].estimate,
                                                           (*res.zone_A)[2].estimate};
  return res;
}

/// Bivariate volume/volatility LogMEM(2,1) on a shared clock. Column 0 is
/// trading volume ("TV"), column 1 realised volatility ("RV").
inline VFitResult fit_bivariate_volume_volatility(const InstrumentSeries& volume, const InstrumentSeries& rv,
                                                  VFitOptions opt = {}, MemSpec spec = {}) {
  spec.p = 2;
  spec.q = 1;
  InstrumentSeries v = volume, r = rv;
  v.name = "TV";
  r.name = "RV";
  opt.zones = false;
  return fit_vlogmem(build_panel({v, r}), spec, opt);
}

// ---- summaries ---------------------------------------------------------------

struct SpilloverSummary {
  Eigen::VectorXd to_sums;    // row sums of significant entries, diagonal included
  Eigen::VectorXd from_sums;  // column sums of significant entries, diagonal included
  double total_offdiag_abs = 0.0;
  double significance_level = 0.01;
};

/// Entries with p >= level are treated as zero.
inline SpilloverSummary spillover_summary(const Eigen::MatrixXd& A, const Eigen::MatrixXd& pvalues,
                                          double level = 0.01) {
  if (A.rows() != A.cols() || pvalues.rows() != A.rows() || pvalues.cols() != A.cols())
    throw DomainError("spillover_summary: A and p-values must be square and the same size");
  SpilloverSummary s;
  s.significance_level = level;
  s.to_sums = Eigen::VectorXd::Zero(A.rows());
  s.from_sums = Eigen::VectorXd::Zero(A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (!(pvalues(i, j) < level)) continue;
      s.to_sums(i) += A(i, j);
      s.from_sums(j) += A(i, j);
      if (i != j) s.total_offdiag_abs += std::fabs(A(i, j));
    }
  return s;
}

inline SpilloverSummary spillover_summary(const VFitResult& fit, double level) {
  return spillover_summary(fit.A.front().estimate, fit.A.front().pvalue, level);
}

inline SpilloverSummary spillover_summary(const VFitResult& fit) { return spillover_summary(fit, fit.level); }

/// Size of an innovation shock to the source instrument.
class Shock {
 public:
  static Shock multiplier(double m) { return Shock(m); }
  /// One conditional standard deviation of a log-normal innovation with
  /// log-scale s, positive values only: 1 + sqrt(exp(s^2) - 1).
  static Shock one_sd(double s) {
    if (!(s > 0.0)) throw DomainError("shock: s must be positive");
    return Shock(1.0 + std::sqrt(std::expm1(s * s)));
  }
  double value() const { return m_; }

 private:
  explicit Shock(double m) : m_(m) {}
  double m_;
};

/// One-step relative increase in each target's conditional mean after a
/// shock to the source: multiplier^{A(target, source)} - 1. Contemporaneous
/// innovation correlation is not modelled, so realised co-movement can be larger.
inline Eigen::VectorXd shock_response(const Eigen::MatrixXd& A, Eigen::Index source, Shock shock) {
  if (!(shock.value() > 0.0)) throw DomainError("shock multiplier must be positive");
  if (source < 0 || source >= A.cols()) throw DomainError("shock_response: source out of range");
  Eigen::VectorXd out(A.rows());
  for (Eigen::Index j = 0; j < A.rows(); ++j) out(j) = std::pow(shock.value(), A(j, source)) - 1.0;
  return out;
}

inline Eigen::VectorXd shock_response(const VFitResult& fit, const std::string& source, Shock shock) {
  return shock_response(fit.A.front().estimate, static_cast<Eigen::Index>(fit.index_of(source)), shock);
}

struct ZoneTotals {
  double total_offdiag_abs = 0.0;
  double total_diag = 0.0;
};

/// Totals of the effective lag-1 matrix A + A_zone, each entry counted only
/// where it is significant at `level`.
inline ZoneTotals zone_totals(const Eigen::MatrixXd& A, const Eigen::MatrixXd& A_p, const Eigen::MatrixXd& A_zone,
                              const Eigen::MatrixXd& A_zone_p, double level) {
  ZoneTotals z;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      double v = 0.0;
      if (A_p(i, j) < level) v += A(i, j);
      if (A_zone_p(i, j) < level) v += A_zone(i, j);
      if (i == j)
        z.total_diag += v;
      else
        z.total_offdiag_abs += std::fabs(v);
    }
  return z;
}

inline ZoneTotals zone_totals(const VFitResult& fit, Zone zone, double level) {
  if (!fit.zone_A) throw DomainError("zone_totals: fit has no zone matrices");
  const auto& zb = (*fit.zone_A)[static_cast<std::size_t>(zone)];
  return zone_totals(fit.A.front().estimate, fit.A.front().pvalue, zb.estimate, zb.pvalue, level);
}

// ---- serialization ---------------------------------------------------------------

inline constexpr int kVFitSchemaVersion = 1;

inline std::string stars(double p) {
  if (!(p < 0.10)) return "";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  return "*";
}

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(finite_or_null(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(i)).size()) != cols)
      throw SchemaError("ragged matrix in fit JSON");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = number_or_nan(j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)));
  }
  return m;
}

inline nlohmann::json block_json(const CoefficientBlock& b, bool with_stars = true) {
  nlohmann::json j{{"estimate", matrix_json(b.estimate)}, {"se", matrix_json(b.se)}, {"pvalue", matrix_json(b.pvalue)}};
  if (with_stars) {
    nlohmann::json st = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.pvalue.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < b.pvalue.cols(); ++c) row.push_back(stars(b.pvalue(i, c)));
      st.push_back(row);
    }
    j["stars"] = st;
  }
  return j;
}

inline CoefficientBlock block_from_json(const nlohmann::json& j) {
  return {matrix_from_json(j.at("estimate")), matrix_from_json(j.at("se")), matrix_from_json(j.at("pvalue"))};
}

inline CoefficientBlock diag_block(const CoefficientBlock& col) {
  const Eigen::Index K = col.estimate.rows();
  CoefficientBlock d = CoefficientBlock::zeros(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    d.estimate(i, i) = col.estimate(i, 0);
    d.se(i, i) = col.se(i, 0);
    d.pvalue(i, i) = col.pvalue(i, 0);
  }
  return d;
}

}  // namespace detail

/// JSON in table layout: rows are receiving equations, columns the lagged
/// source instruments.
inline nlohmann::json vfit_to_json(const VFitResult& f) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kVFitSchemaVersion;
  j["model"] = "vLogMEM(" + std::to_string(f.spec.p) + "," + std::to_string(f.spec.q) + ")";
  j["instruments"] = f.instruments;
  j["significance_level"] = f.level;
  j["zones"] = f.zones;
  j["w"] = detail::block_json(f.w, false);
  json A = json::array(), A0 = json::array(), B = json::array();
  for (std::size_t l = 0; l < f.A.size(); ++l) {
    json a = detail::block_json(f.A[l]);
    a["lag"] = l + 1;
    A.push_back(a);
    json a0 = detail::block_json(f.A0[l]);
    a0["lag"] = l + 1;
    A0.push_back(a0);
  }
  for (std::size_t l = 0; l < f.B.size(); ++l) {
    json b = detail::block_json(detail::diag_block(f.B[l]));
    b["lag"] = l + 1;
    B.push_back(b);
  }
  j["A"] = A;
  j["A0"] = A0;
  j["Gamma"] = detail::block_json(f.Gamma);
  j["B"] = B;
  std::vector<double> s(f.params.s.data(), f.params.s.data() + f.params.s.size());
  std::vector<double> pp(f.params.p_plus.data(), f.params.p_plus.data() + f.params.p_plus.size());
  j["s"] = s;
  j["p_plus"] = pp;
  if (f.zone_A) {
    for (std::size_t z = 0; z < 3; ++z) j["zone_matrices"][to_string(kZones[z])] = detail::block_json((*f.zone_A)[z]);
  }
  const Eigen::MatrixXi sig = f.significance();
  json sj = json::array();
  for (Eigen::Index i = 0; i < sig.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < sig.cols(); ++c) row.push_back(sig(i, c));
    sj.push_back(row);
  }
  j["significance"] = sj;
  const SpilloverSummary ss = spillover_summary(f);
  j["spillover"] = {{"to", std::vector<double>(ss.to_sums.data(), ss.to_sums.data() + ss.to_sums.size())},
                    {"from", std::vector<double>(ss.from_sums.data(), ss.from_sums.data() + ss.from_sums.size())},
                    {"total_offdiag_abs", ss.total_offdiag_abs}};
  json eqs = json::array();
  for (std::size_t i = 0; i < f.equations.size(); ++i) {
    const auto& e = f.equations[i];
    eqs.push_back({{"instrument", f.instruments[i]},
                   {"loglik", detail::finite_or_null(e.loglik)},
                   {"bic", detail::finite_or_null(e.bic)},
                   {"k", e.k},
                   {"n_obs", e.n_obs},
                   {"converged", e.converged},
                   {"unidentified", e.unidentified},
                   {"message", e.message},
                   {"se_error", e.se_error}});
  }
  j["equations"] = eqs;
  j["diagnostics"] = f.diagnostics;
  return j;
}

/// Reads back the coefficient blocks written by vfit_to_json. Per-equation
/// FitResults are not reconstructed.
inline VFitResult vfit_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kVFitSchemaVersion)
      throw SchemaError("fit JSON: unsupported schema_version");
    VFitResult f;
    f.instruments = j.at("instruments").get<std::vector<std::string>>();
    f.level = j.at("significance_level").get<double>();
    f.zones = j.value("zones", false);
    const auto K = static_cast<Eigen::Index>(f.instruments.size());
    f.w = detail::block_from_json(j.at("w"));
    for (const auto& a : j.at("A")) f.A.push_back(detail::block_from_json(a));
    for (const auto& a : j.at("A0")) f.A0.push_back(detail::block_from_json(a));
    f.Gamma = detail::block_from_json(j.at("Gamma"));
    for (const auto& b : j.at("B")) {
      CoefficientBlock d = detail::block_from_json(b);
      f.B.push_back({d.estimate.diagonal(), d.se.diagonal(), d.pvalue.diagonal()});
    }
    if (f.A.empty() || f.B.empty()) throw SchemaError("fit JSON: missing A or B");
    for (const auto& blk : f.A)
      if (blk.estimate.rows() != K || blk.estimate.cols() != K || blk.pvalue.rows() != K)
        throw SchemaError("fit JSON: A dimensions do not match instruments");
    f.spec.p = static_cast<int>(f.A.size());
    f.spec.q = static_cast<int>(f.B.size());
    auto s = j.at("s").get<std::vector<double>>();
    auto pp = j.at("p_plus").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(s.size()) != K) throw SchemaError("fit JSON: s has wrong length");
    f.params = VParamSet::zeros(K, f.spec.p, f.spec.q);
    for (Eigen::Index i = 0; i < K; ++i) {
      f.params.s(i) = s[static_cast<std::size_t>(i)];
      f.params.p_plus(i) = pp.at(static_cast<std::size_t>(i));
    }
    for (std::size_t l = 0; l < f.A.size(); ++l) {
      f.params.A[l] = f.A[l].estimate;
      f.params.A0[l] = f.A0[l].estimate;
    }
    for (std::size_t l = 0; l < f.B.size(); ++l) f.params.B[l] = f.B[l].estimate.col(0);
    f.params.w = f.w.estimate.col(0);
    f.params.Gamma = f.Gamma.estimate;
    if (j.contains("zone_matrices")) {
      std::array<CoefficientBlock, 3> z;
      for (std::size_t k = 0; k < 3; ++k) z[k] = detail::block_from_json(j.at("zone_matrices").at(to_string(kZones[k])));
      f.zone_A = z;
      f.params.zone_A = std::array<Eigen::MatrixXd, 3>{z[0].estimate, z[1].estimate, z[2].estimate};
    }
    if (j.contains("diagnostics")) f.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("fit JSON: ") + e.what());
  }
}

}  // namespace voltx
