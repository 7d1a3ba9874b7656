#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "voltx/pipeline.hpp"
#include "voltx/sim.hpp"

using namespace voltx;
using Catch::Approx;

namespace {

ParamSet params(double s, double pp, double alpha = 0.35, double beta = 0.55) {
  ParamSet p;
  p.alpha = {alpha};
  p.alpha0 = {0.0};
  p.beta = {beta};
  p.gamma = 0.0;
  p.s = s;
  p.p_plus = pp;
  return p;
}

}  // namespace

TEST_CASE("simulate_logmem: deterministic fixed point as s -> 0") {
  auto sim = simulate_logmem(params(0.0, 1.0), MemSpec{}, 100, 1);
  for (double x : sim.x) CHECK(x == Approx(1.0).margin(1e-12));
}

TEST_CASE("simulate_logmem: zero fraction") {
  auto sim = simulate_logmem(params(0.3, 0.8), MemSpec{}, 100000, 2);
  std::size_t zeros = 0;
  for (double x : sim.x) zeros += x == 0.0 ? 1 : 0;
  CHECK(static_cast<double>(zeros) / 1e5 == Approx(0.2).margin(0.005));
}

TEST_CASE("simulate_logmem: unit-mean innovations") {
  Rng rng(4);
  for (double pp : {1.0, 0.7}) {
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum += draw_zaln(rng, 0.5, pp);
    CHECK(sum / n == Approx(1.0).margin(0.005));
  }
}

TEST_CASE("simulate_logmem: reproducible, warns when non-stationary") {
  auto a = simulate_logmem(params(0.3, 0.9), MemSpec{}, 500, 7);
  auto b = simulate_logmem(params(0.3, 0.9), MemSpec{}, 500, 7);
  CHECK(a.x == b.x);
  CHECK(a.neg_return == b.neg_return);
  CHECK(a.warnings.empty());
  auto c = simulate_logmem(params(0.3, 0.9, 0.5, 0.5), MemSpec{}, 50, 7);
  CHECK(c.warnings.size() == 1);
  CHECK(c.x.size() == 50);
}

TEST_CASE("simulate_logmem: neg flags are fair coins or follow co-simulated returns") {
  auto a = simulate_logmem(params(0.3, 1.0), MemSpec{}, 100000, 3);
  double share = 0;
  for (auto n : a.neg_return) share += n;
  CHECK(share / 1e5 == Approx(0.5).margin(0.005));
  MemSimOptions o;
  o.co_simulate_returns = true;
  auto b = simulate_logmem(params(0.3, 1.0), MemSpec{}, 1000, 3, o);
  REQUIRE(b.returns.size() == 1000);
  for (std::size_t t = 0; t < 1000; ++t) CHECK((b.neg_return[t] != 0) == (b.returns[t] < 0.0));
}

TEST_CASE("simulate_logmem matches the filter on its own output") {
  MemSpec spec;
  auto p = params(0.3, 0.9);
  p.gamma = 0.05;
  p.alpha0 = {-0.2};
  MemSimOptions o;
  o.burn_in = 0;
  auto sim = simulate_logmem(p, spec, 2000, 5, o);
  auto lm = logmem_log_filter(p, sim.data(), spec);
  for (std::size_t t = 0; t < lm.size(); ++t) CHECK(lm[t] == Approx(sim.log_mu[t]).margin(1e-12));
}

TEST_CASE("simulate_vlogmem: independent streams") {
  VParamSet v = VParamSet::zeros(2);
  v.A[0] << 0.3, 0.0, 0.0, 0.3;
  v.B[0] << 0.5, 0.5;
  v.s << 0.3, 0.3;
  auto sim = simulate_vlogmem(v, 50000, 9);
  std::vector<double> a, b;
  for (std::size_t t = 0; t < sim.times.size(); ++t) {
    a.push_back(std::log(sim.x[0][t]));
    b.push_back(std::log(sim.x[1][t]));
  }
  CHECK(std::fabs(detail::pearson(a, b)) < 0.02);
  auto again = simulate_vlogmem(v, 50000, 9);
  CHECK(again.x == sim.x);
  CHECK(sim.times[1] - sim.times[0] == kIntervalSeconds);
  CHECK(sim.panel().rows() == 50000);
}

TEST_CASE("simulate_ticks: constant path without volatility") {
  TickSimConfig c;
  c.sigma_annual = 0.0;
  c.intervals = 3;
  auto t = simulate_ticks(c);
  REQUIRE(t.records.size() == 3 * 300 + 1);
  for (const auto& r : t.records) CHECK(r.price == c.initial_price);
}

TEST_CASE("simulate_ticks: bipower and MedRV recover sigma") {
  TickSimConfig c;
  c.seed = 1;
  c.intervals = 2000;
  auto ticks = simulate_ticks(c);
  for (auto e : {Estimator::bpv, Estimator::medrv}) {
    RvConfig rc;
    rc.estimator = e;
    auto recs = realised_intervals(ticks, c.start_s, c.end_s(), rc);
    REQUIRE(recs.size() == 2000);
    double m = 0;
    for (const auto& r : recs) m += r.value;
    CHECK(m / 2000 == Approx(0.70).epsilon(0.05));
  }
}

TEST_CASE("simulate_ticks: sparse arrivals are zeroed by the threshold") {
  TickSimConfig c;
  c.seed = 2;
  c.intervals = 100;
  c.arrival_probability = 0.15;
  auto recs = realised_intervals(simulate_ticks(c), c.start_s, c.end_s(), RvConfig{});
  int zeroed = 0;
  for (const auto& r : recs) {
    CHECK(r.zeroed == (r.active_seconds < 60));
    zeroed += r.zeroed ? 1 : 0;
  }
  CHECK(zeroed >= 95);
}

TEST_CASE("simulate_ticks: reproducible CSV in the ingest schema") {
  TickSimConfig c;
  c.seed = 3;
  c.intervals = 2;
  c.jump_intensity = 0.01;
  c.jump_size = 0.01;
  std::ostringstream a, b;
  write_ticks_csv(a, simulate_ticks(c));
  write_ticks_csv(b, simulate_ticks(c));
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  auto parsed = parse_ticks(in);
  CHECK(parsed.records.size() == simulate_ticks(c).records.size());
  CHECK(parsed.records == simulate_ticks(c).records);
}

TEST_CASE("simulate_ticks: config validation") {
  TickSimConfig c;
  c.arrival_probability = 0.0;
  CHECK_THROWS_AS(simulate_ticks(c), DomainError);
  c.arrival_probability = 1.0;
  c.jump_intensity = -1;
  CHECK_THROWS_AS(simulate_ticks(c), DomainError);
}
