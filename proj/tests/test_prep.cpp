#include <catch_amalgamated.hpp>

#include <sstream>

#include "voltx/prep.hpp"
#include "voltx/rng.hpp"

using namespace voltx;
using Catch::Approx;

namespace {

std::int64_t at_slot(int day, int slot) { return day * kSecondsPerDay + slot * kIntervalSeconds; }

std::vector<IntervalObservation> days_of(int days, double value) {
  std::vector<IntervalObservation> v;
  for (int d = 0; d < days; ++d)
    for (int k = 0; k < kSlotsPerDay; ++k) v.push_back({at_slot(d, k), value, false});
  return v;
}

}  // namespace

TEST_CASE("slot and zone boundaries") {
  CHECK(slot_of(0) == 0);
  CHECK(slot_of(299) == 0);
  CHECK(slot_of(300) == 1);
  CHECK(slot_of(kSecondsPerDay - 1) == 287);
  CHECK(slot_of(-300) == 287);
  CHECK(zone_of_slot(95) == Zone::AS);
  CHECK(zone_of_slot(96) == Zone::EU);
  CHECK(zone_of_slot(191) == Zone::EU);
  CHECK(zone_of_slot(192) == Zone::US);
  CHECK(zone_of_slot(287) == Zone::US);
  CHECK(slot_label(192) == "16:00");
  CHECK(slot_label(95) == "07:55");
  for (auto z : {Zone::AS, Zone::EU, Zone::US}) CHECK(zone_from_string(to_string(z)) == z);
}

TEST_CASE("zone indicators sum to one on every row") {
  Panel p = build_panel({{"A", days_of(2, 1.0)}});
  for (std::size_t t = 0; t < p.rows(); ++t) {
    int count = 0;
    for (auto z : {Zone::AS, Zone::EU, Zone::US}) count += p.zones[t] == z ? 1 : 0;
    CHECK(count == 1);
  }
}

TEST_CASE("diurnal factors: mean, median, flat, floored") {
  auto obs = days_of(2, 1.0);
  obs[17].value = 2.0;
  obs[288 + 17].value = 4.0;
  auto prof = diurnal_factors(obs, Statistic::mean);
  CHECK(prof.factors[17] == 3.0);
  CHECK(prof.factors[0] == 1.0);
  CHECK(prof.floored_slots.empty());

  auto flat = diurnal_factors(days_of(3, 5.0));
  for (double f : flat.factors) CHECK(f == 5.0);

  auto z = days_of(2, 1.0);
  z[40].value = 0.0;
  z[288 + 40].value = 0.0;
  auto pz = diurnal_factors(z);
  CHECK(pz.factors[40] == kFactorFloor);
  CHECK(pz.floored_slots == std::vector<int>{40});
  auto adj = diurnal_adjust(z, pz);
  CHECK(adj[40].value == 0.0);

  auto skew = days_of(3, 1.0);
  skew[2 * 288 + 5].value = 10.0;
  CHECK(diurnal_factors(skew, Statistic::median).factors[5] == 1.0);
  CHECK(diurnal_factors(skew, Statistic::mean).factors[5] == 4.0);
}

TEST_CASE("diurnal factors: empty slot names the slot") {
  auto obs = days_of(1, 1.0);
  obs.erase(obs.begin() + 100);
  try {
    diurnal_factors(obs);
    FAIL("expected an error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("slot 100") != std::string::npos);
  }
}

TEST_CASE("diurnal adjustment: arithmetic and same-sample idempotence") {
  auto obs = days_of(2, 1.0);
  obs[17].value = 2.0;
  obs[288 + 17].value = 4.0;
  auto adj = diurnal_adjust(obs, diurnal_factors(obs));
  CHECK(adj[17].value == Approx(2.0 / 3.0));
  CHECK(adj[288 + 17].value == Approx(4.0 / 3.0));

  Rng rng(9);
  auto noisy = days_of(20, 1.0);
  for (auto& o : noisy) o.value = std::exp(rng.normal()) * (1.0 + o.slot() / 50.0);
  auto a = diurnal_adjust(noisy, diurnal_factors(noisy));
  auto again = diurnal_factors(a);
  for (double f : again.factors) CHECK(f == Approx(1.0).margin(1e-12));
}

TEST_CASE("winsorize_top: nearest rank") {
  std::vector<double> v;
  for (int i = 1; i <= 10000; ++i) v.push_back(i);
  auto rep = winsorize_top(v, 0.0005);
  CHECK(rep.threshold == 9995.0);
  CHECK(rep.clipped == 5);
  for (int i = 9995; i < 10000; ++i) CHECK(v[static_cast<std::size_t>(i)] == 9995.0);
  CHECK(v[9993] == 9994.0);

  std::vector<double> same(50, 2.5);
  CHECK(winsorize_top(same).clipped == 0);
  CHECK(same == std::vector<double>(50, 2.5));

  std::vector<double> w{5, 1, 9};
  CHECK(winsorize_top(w, 0.0).clipped == 0);
  CHECK(w == std::vector<double>{5, 1, 9});
  std::vector<double> empty;
  CHECK_THROWS_AS(winsorize_top(empty), DomainError);
}

TEST_CASE("winsorize_top: idempotent and monotone") {
  Rng rng(2);
  std::vector<double> v(5000);
  for (auto& x : v) x = std::exp(2.0 * rng.normal());
  const auto orig = v;
  winsorize_top(v, 0.01);
  auto twice = v;
  CHECK(winsorize_top(twice, 0.01).clipped == 0);
  CHECK(twice == v);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j : {i / 2, (i * 7) % v.size()})
      if (orig[i] <= orig[j]) CHECK(v[i] <= v[j]);
}

TEST_CASE("build_panel: alignment and drops") {
  auto a = days_of(1, 1.0), b = days_of(1, 2.0);
  Panel p = build_panel({{"A", a}, {"B", b}});
  CHECK(p.rows() == 288);
  CHECK(p.dropped_rows == 0);

  b.erase(b.begin() + 10);
  Panel q = build_panel({{"A", a}, {"B", b}});
  CHECK(q.rows() == 287);
  CHECK(q.dropped_rows == 1);

  auto days90 = days_of(90, 1.0);
  CHECK(build_panel({{"A", days90}}).rows() == 25920);

  CHECK_THROWS_AS(build_panel({{"A", a}, {"A", a}}), DomainError);
  std::vector<IntervalObservation> late{{at_slot(5, 0), 1.0, false}};
  CHECK_THROWS_AS(build_panel({{"A", a}, {"B", late}}), DomainError);
}

TEST_CASE("panel masks") {
  auto a = days_of(1, 1.0);
  a[3].value = 0.0;
  a[4].neg_return = true;
  Panel p = build_panel({{"A", a}});
  CHECK(p.columns[0].zero[3] == 1);
  CHECK(p.columns[0].zero[4] == 0);
  CHECK(p.columns[0].neg_return[4] == 1);
}

TEST_CASE("panel CSV and JSON round trips") {
  Rng rng(4);
  auto a = days_of(2, 1.0), b = days_of(2, 1.0);
  for (auto* s : {&a, &b})
    for (auto& o : *s) {
      o.value = rng.uniform() < 0.1 ? 0.0 : std::exp(rng.normal());
      o.neg_return = rng.bernoulli(0.5);
    }
  Panel p = build_panel({{"CB", a}, {"BY", b}});

  std::stringstream ss;
  write_panel_csv(ss, p);
  Panel q = read_panel_csv(ss);
  CHECK(q.times == p.times);
  CHECK(q.zones == p.zones);
  REQUIRE(q.cols() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(q.columns[k].name == p.columns[k].name);
    CHECK(q.columns[k].values == p.columns[k].values);
    CHECK(q.columns[k].zero == p.columns[k].zero);
    CHECK(q.columns[k].neg_return == p.columns[k].neg_return);
  }

  Panel r = panel_from_json(nlohmann::json::parse(panel_to_json(p).dump()));
  CHECK(r.times == p.times);
  for (std::size_t k = 0; k < 2; ++k) CHECK(r.columns[k].values == p.columns[k].values);
}

TEST_CASE("panel CSV rejects schema errors with line numbers") {
  auto expect_line = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_panel_csv(in, "p.csv");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_line("time,instrument,value,zero,neg_return,zone\n", "p.csv:1");
  expect_line("timestamp,instrument,value,zero,neg_return,zone\n0,A,1,0,0,AS\n300,A,x,0,0,AS\n", "p.csv:3");
  expect_line("timestamp,instrument,value,zero,neg_return,zone\n0,A,0,0,0,AS\n", "p.csv:2");
  expect_line("timestamp,instrument,value,zero,neg_return,zone\n0,A,1,0,0,US\n", "p.csv:2");
  expect_line("timestamp,instrument,value,zero,neg_return,zone\n0,A,1,0,0,AS\n0,B,1,0,0,AS\n300,A,1,0,0,AS\n",
              "not aligned");

  nlohmann::json bad = panel_to_json(build_panel({{"A", days_of(1, 1.0)}}));
  bad["schema_version"] = 2;
  CHECK_THROWS_AS(panel_from_json(bad), SchemaError);
}
