#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "voltx/mem.hpp"
#include "voltx/sim.hpp"

using namespace voltx;
using Catch::Approx;

namespace {

ParamSet params11(double omega, double alpha, double gamma, double beta, double s, double pp = 1.0,
                  double alpha0 = 0.0) {
  ParamSet p;
  p.omega = omega;
  p.alpha = {alpha};
  p.alpha0 = {alpha0};
  p.gamma = gamma;
  p.beta = {beta};
  p.s = s;
  p.p_plus = pp;
  return p;
}

MemData simulated(std::size_t T, std::uint64_t seed, const ParamSet& ps, MemSpec spec = {}) {
  return simulate_logmem(ps, spec, T, seed).data();
}

MemData iid_lognormal(std::size_t T, double s, std::uint64_t seed) {
  Rng rng(seed);
  MemData d;
  for (std::size_t t = 0; t < T; ++t) d.x.push_back(std::exp(0.2 + s * rng.normal()));
  return d;
}

}  // namespace

TEST_CASE("filter: closed-form steps") {
  MemSpec spec;
  spec.asymmetry = false;
  MemData d{{1.0, 1.0, 1.0}, {}, {}};
  auto mu = logmem_filter(params11(0, 0.4, 0, 0.5, 1), d, spec);
  CHECK(mu[0] == 1.0);
  CHECK(mu[1] == Approx(1.0));

  d.x = {std::numbers::e, 1.0};
  auto lm = logmem_log_filter(params11(0, 0.4, 0, 0.5, 1), d, spec);
  CHECK(lm[1] == Approx(0.4));
  CHECK(std::exp(lm[1]) == Approx(1.4918).margin(1e-4));

  d.x = {0.0, 1.0};
  auto z = logmem_filter(params11(0, 0.4, 0, 0.5, 1, 0.9, -0.2), d, spec);
  CHECK(std::log(z[1]) == Approx(-0.2));
  CHECK(z[1] == Approx(0.8187).margin(1e-4));

  CHECK_THROWS_AS(logmem_filter(params11(0, 0.4, 0, 0.5, 1), MemData{{1.0}, {}, {}}, spec), DomainError);
  CHECK_THROWS_AS(logmem_filter(params11(0, 0.4, 0, 0.5, 1), MemData{{1.0, NAN}, {}, {}}, spec), DomainError);
}

TEST_CASE("filter: asymmetry uses the lagged negative-return flag") {
  MemSpec spec;
  MemData d{{std::numbers::e, 1.0}, {1, 0}, {}};
  auto lm = logmem_log_filter(params11(0, 0.4, 0.1, 0.5, 1), d, spec);
  CHECK(lm[1] == Approx(0.5));
  d.neg_return = {0, 0};
  CHECK(logmem_log_filter(params11(0, 0.4, 0.1, 0.5, 1), d, spec)[1] == Approx(0.4));
  d.x = {0.0, 1.0};
  d.neg_return = {1, 0};
  CHECK(logmem_log_filter(params11(0, 0.4, 0.1, 0.5, 1, 0.9), d, spec)[1] == Approx(0.0));
}

TEST_CASE("filter: positivity and bit-identical determinism") {
  const auto d = simulated(2000, 1, params11(0.05, 0.35, 0.03, 0.55, 0.3, 0.95));
  const auto p = params11(3.0, 0.9, -2.0, 0.95, 0.3);
  auto a = logmem_filter(p, d, MemSpec{});
  auto b = logmem_filter(p, d, MemSpec{});
  CHECK(a == b);
  for (double m : a) CHECK(m > 0.0);
}

TEST_CASE("ZALN contributions") {
  CHECK(zaln_contribution(0.0, 1.0, 0.5, 0.9) == Approx(std::log(0.1)));
  CHECK(zaln_contribution(0.0, 1.0, 0.5, 0.9) == Approx(-2.3026).margin(1e-4));
  // log(phi(0.5)) for x = 1, mu = 1, s = 1, p+ = 1.
  CHECK(zaln_contribution(1.0, 1.0, 1.0, 1.0) == Approx(-0.5 * std::log(2 * std::numbers::pi) - 0.125));
  CHECK(zaln_contribution(1.0, 1.0, 1.0, 1.0) == Approx(-1.04394).margin(1e-5));
  CHECK(zaln_contribution(std::exp(-0.125), 1.0, 0.5, 1.0) == Approx(-0.1008).margin(1e-4));
  CHECK_THROWS_AS(zaln_contribution(0.0, 1.0, 0.5, 1.0), EstimationError);
  CHECK_THROWS_AS(zaln_contribution(1.0, 1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("zaln_loglik names the offending observation and skips burn-in") {
  std::vector<double> x{0.0, 1.0, 0.0}, mu{1.0, 1.0, 1.0};
  try {
    zaln_loglik(x, mu, 1.0, 1.0, 1);
    FAIL("expected EstimationError");
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
  std::vector<double> x2{0.0, 1.0};
  CHECK(zaln_loglik(x2, std::vector<double>{1.0, 1.0}, 1.0, 1.0, 1) == Approx(zaln_contribution(1, 1, 1, 1)));
}

TEST_CASE("ZALN normalisation and unit mean by quadrature") {
  for (double s : {0.1, 0.3, 1.0})
    for (double pp : {0.5, 0.9, 1.0}) {
      // Integrate over u = log x with a fine midpoint rule over +-14 sd.
      const double m = -0.5 * s * s - std::log(pp);
      const int N = 200000;
      const double lo = m - 14 * s, hi = m + 14 * s, h = (hi - lo) / N;
      double mass = pp < 1.0 ? 1.0 - pp : 0.0, mean = 0.0;
      for (int i = 0; i < N; ++i) {
        const double u = lo + (i + 0.5) * h;
        const double x = std::exp(u);
        const double dens = std::exp(zaln_contribution(x, 1.0, s, pp)) * x;  // dx = x du
        mass += dens * h;
        mean += dens * x * h;
      }
      CHECK(mass == Approx(1.0).margin(1e-6));
      CHECK(mean == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("analytic gradient matches central differences") {
  MemSpec spec;
  spec.p = 2;
  auto truth = params11(0.02, 0.3, 0.04, 0.5, 0.3, 0.93, -0.1);
  truth.alpha = {0.25, 0.05};
  truth.alpha0 = {-0.1, 0.02};
  auto d = simulated(3000, 17, truth, spec);
  Rng rng(99);
  std::vector<double> xr(d.x.size());
  for (auto& v : xr) v = rng.normal();
  d.exog.push_back({"ext", xr});
  for (int rep = 0; rep < 20; ++rep) {
    ParamSet p = truth;
    p.omega += rng.uniform(-0.1, 0.1);
    p.alpha = {rng.uniform(0.1, 0.4), rng.uniform(-0.1, 0.1)};
    p.alpha0 = {rng.uniform(-0.3, 0.1), rng.uniform(-0.1, 0.1)};
    p.gamma = rng.uniform(-0.1, 0.1);
    p.beta = {rng.uniform(0.3, 0.6)};
    p.exog = {rng.uniform(-0.05, 0.05)};
    p.s = rng.uniform(0.2, 0.5);
    p.p_plus = empirical_p_plus(d.x);
    const auto g = logmem_gradient(p, d, spec);
    const ParamLayout lay = layout_for(spec, d);
    auto th = pack(p, lay);
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double h = 1e-6 * (1.0 + std::fabs(th[i]));
      auto tp = th, tm = th;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (logmem_loglik(unpack(tp, lay, p.p_plus), d, spec) -
                         logmem_loglik(unpack(tm, lay, p.p_plus), d, spec)) /
                        (2 * h);
      CHECK(g[i] == Approx(fd).epsilon(1e-4).margin(1e-4));
    }
  }
}

TEST_CASE("empirical p_plus and policy") {
  std::vector<double> x{0.0, 1.0, 2.0, 0.0, 3.0};
  CHECK(empirical_p_plus(x) == Approx(0.6));
  MemSpec fixed;
  fixed.p_plus_policy = PPlusPolicy::fixed;
  fixed.p_plus_value = 0.8;
  CHECK(resolve_p_plus(fixed, x) == 0.8);
  CHECK(resolve_p_plus(MemSpec{}, x) == Approx(0.6));
}

TEST_CASE("half-life and BIC") {
  CHECK(half_life(0.3741, 0.5901) == Approx(95.06).margin(0.01));
  CHECK(std::lround(half_life(0.3741, 0.5901)) == 95);
  CHECK(std::lround(half_life(0.2871, 0.6829)) == 114);
  CHECK(half_life(0.25, 0.25) == Approx(5.0).epsilon(1e-15));
  CHECK(std::isinf(half_life(0.5, 0.5)));
  CHECK_THROWS_AS(half_life(0.0, 0.0), DomainError);
  CHECK(bic(1448, 6, 25920) == Approx(6 * std::log(25920.0) - 2896));
  CHECK(std::lround(bic(1448, 6, 25920)) == -2835);
  CHECK(bic(0, 0, 100) == 0.0);
}

TEST_CASE("fit: i.i.d. log-normal with dynamics fixed recovers the sample sd") {
  const auto d = iid_lognormal(5000, 0.4, 3);
  MemSpec spec;
  spec.asymmetry = false;
  spec.zero_augmented = false;
  FitOptions o;
  o.fixed = {{"alpha[1]", 0.0}, {"beta[1]", 0.0}};
  auto f = fit_logmem(d, spec, o);
  REQUIRE(f.converged);
  double m = 0, v = 0;
  const std::size_t n = d.x.size() - 1;
  for (std::size_t t = 1; t < d.x.size(); ++t) m += std::log(d.x[t]);
  m /= static_cast<double>(n);
  for (std::size_t t = 1; t < d.x.size(); ++t) v += std::pow(std::log(d.x[t]) - m, 2);
  const double sd = std::sqrt(v / static_cast<double>(n - 1));
  CHECK(f.params.s == Approx(sd).margin(1e-3));
  CHECK(f.k == 2);
  CHECK_FALSE(f.is_free("alpha[1]"));
  CHECK(f.value("alpha[1]") == 0.0);
  CHECK(std::isnan(f.se("alpha[1]")));
}

TEST_CASE("fit: robust SE of the location matches s / sqrt(T)") {
  const auto d = iid_lognormal(10000, 0.3, 8);
  MemSpec spec;
  spec.asymmetry = false;
  spec.zero_augmented = false;
  FitOptions o;
  o.fixed = {{"alpha[1]", 0.0}, {"beta[1]", 0.0}};
  auto f = fit_logmem(d, spec, o);
  REQUIRE(f.se_error.empty());
  CHECK(f.se("omega") == Approx(0.3 / std::sqrt(10000.0)).epsilon(0.10));
}

TEST_CASE("fit: sandwich and inverse-Hessian SEs agree under correct specification") {
  const auto truth = params11(0.0, 0.35, 0.03, 0.55, 0.28);
  const auto d = simulated(20000, 21, truth);
  auto f = fit_logmem(d, MemSpec{});
  REQUIRE(f.converged);
  REQUIRE(f.se_error.empty());
  for (const char* name : {"omega", "alpha[1]", "gamma", "beta[1]", "s"})
    CHECK(f.se(name) == Approx(f.hessian_se[f.index(name)]).epsilon(0.15));
  CHECK(f.stationary);
  CHECK(f.half_life_minutes == Approx(half_life(f.params.alpha_sum(), f.params.beta_sum())));
  CHECK(f.bic == Approx(f.k * std::log(static_cast<double>(f.n_obs)) - 2 * f.loglik));
}

TEST_CASE("fit: degenerate data") {
  MemData d{std::vector<double>(600, 2.0), {}, {}};
  auto f = fit_logmem(d, MemSpec{});
  CHECK(f.unidentified);
  CHECK_FALSE(f.converged);
  FitResult g = f;
  g.estimates[g.index("s")] = 0.3;
  g.free.assign(g.free.size(), 0);
  for (const char* n : {"omega", "alpha[1]", "beta[1]", "s"}) g.free[g.index(n)] = 1;
  CHECK_THROWS_AS(robust_se(g, d), EstimationError);
  CHECK_THROWS_AS(fit_logmem(MemData{std::vector<double>(100, 1.0), {}, {}}, MemSpec{}), DomainError);
}

TEST_CASE("fit: auto-fixed parameters and zero observations") {
  auto truth = params11(0.0, 0.3, 0.0, 0.5, 0.3, 0.9, -0.2);
  auto d = simulated(4000, 5, truth);
  auto f = fit_logmem(d, MemSpec{});
  CHECK(f.is_free("alpha0[1]"));
  CHECK(f.params.p_plus == Approx(empirical_p_plus(d.x)));
  CHECK(f.value("alpha0[1]") == Approx(-0.2).margin(0.1));

  auto pos = simulated(4000, 5, params11(0.0, 0.3, 0.0, 0.5, 0.3));
  pos.neg_return.clear();
  auto g = fit_logmem(pos, MemSpec{});
  CHECK_FALSE(g.is_free("alpha0[1]"));
  CHECK_FALSE(g.is_free("gamma"));
  CHECK(g.k == 4);
  CHECK_THROWS_AS(fit_logmem(pos, MemSpec{}, FitOptions{.fixed = {{"nope", 0.0}}}), DomainError);
}

TEST_CASE("fit: scale reparameterisation") {
  MemSpec spec;
  spec.asymmetry = false;
  const auto d = simulated(20000, 12, params11(0.0, 0.35, 0.0, 0.55, 0.28));
  auto a = fit_logmem(d, spec);
  REQUIRE(a.converged);
  // log mu starts at 0 for both series, so the start-up transient grows with
  // |log c| and perturbs the estimates at O(1/T).
  for (auto [c, tol] : {std::pair{1.2, 5e-4}, std::pair{7.5, 5e-3}}) {
    MemData scaled = d;
    for (auto& v : scaled.x) v *= c;
    auto b = fit_logmem(scaled, spec);
    REQUIRE(b.converged);
    CHECK(b.value("alpha[1]") == Approx(a.value("alpha[1]")).margin(tol));
    CHECK(b.value("beta[1]") == Approx(a.value("beta[1]")).margin(tol));
    CHECK(b.params.s == Approx(a.params.s).margin(tol));
    const double shift = (1 - a.value("alpha[1]") - a.value("beta[1]")) * std::log(c);
    CHECK(b.value("omega") - a.value("omega") == Approx(shift).margin(2 * tol));
  }
}

TEST_CASE("fit: deterministic for a given seed") {
  const auto d = simulated(3000, 4, params11(0.0, 0.35, 0.03, 0.55, 0.28));
  auto a = fit_logmem(d, MemSpec{}, FitOptions{.seed = 9});
  auto b = fit_logmem(d, MemSpec{}, FitOptions{.seed = 9});
  CHECK(a.estimates == b.estimates);
  REQUIRE(a.robust_se.size() == b.robust_se.size());
  for (std::size_t i = 0; i < a.robust_se.size(); ++i)
    CHECK((a.robust_se[i] == b.robust_se[i] || (std::isnan(a.robust_se[i]) && std::isnan(b.robust_se[i]))));
}

TEST_CASE("fit JSON carries the documented fields") {
  const auto d = simulated(1500, 4, params11(0.0, 0.35, 0.03, 0.55, 0.28));
  auto f = fit_logmem(d, MemSpec{});
  auto j = fit_to_json(f, "CB");
  CHECK(j["schema_version"] == kFitSchemaVersion);
  CHECK(j["instrument"] == "CB");
  CHECK(j["model"] == "LogMEM(1,1)");
  for (const char* k : {"parameters", "p_plus", "loglik", "bic", "k", "n_obs", "half_life_minutes", "convergence"})
    CHECK(j.contains(k));
  CHECK(j["parameters"].size() == f.names.size());
  CHECK(j["parameters"][0]["name"] == "omega");
}

TEST_CASE("spec validation") {
  MemSpec s;
  s.p = 0;
  CHECK_THROWS_AS(s.validate(), DomainError);
}
