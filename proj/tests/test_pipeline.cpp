#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "voltx/pipeline.hpp"

using namespace voltx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("voltx_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json small_config(const fs::path& out) {
  auto j = nlohmann::json::parse(R"({
    "instruments": [
      {"name": "AAA", "simulate": {"sigma_annual": 0.6, "arrival_probability": 0.5}},
      {"name": "BBB", "simulate": {"sigma_annual": 0.8, "arrival_probability": 0.3}}
    ],
    "synthetic": {"A": [[0.3, 0.0], [0.1, 0.3]], "B": [0.5, 0.5], "s": [0.25, 0.3]},
    "start": "2024-03-01",
    "end": "2024-03-03",
    "estimator": {"name": "bpv"},
    "model": {"starts": 1},
    "seed": 11
  })");
  j["output_dir"] = out.string();
  return j;
}

}  // namespace

TEST_CASE("parse_time accepts the documented forms") {
  CHECK(parse_time(nlohmann::json(1704067200)) == 1704067200);
  CHECK(parse_time(nlohmann::json("2024-01-01")) == 1704067200);
  CHECK(parse_time(nlohmann::json("2024-01-01T00:05:00Z")) == 1704067500);
  CHECK_THROWS_AS(parse_time(nlohmann::json("01/01/2024")), SchemaError);
  CHECK_THROWS_AS(parse_time(nlohmann::json("2024-02-30")), SchemaError);
  CHECK(utc_string(1704067500) == "2024-01-01T00:05:00Z");
}

TEST_CASE("config parsing and validation") {
  auto j = nlohmann::json::parse(R"({"instruments": [{"name": "X", "ticks": "x.csv"}],
                                     "start": "2024-01-01", "end": "2024-01-02",
                                     "estimator": {"name": "medrv"}, "seed": 5})");
  auto c = run_config_from_json(j, "/data");
  CHECK(c.instruments[0].ticks == "x.csv");
  CHECK(c.rv.estimator == Estimator::medrv);
  CHECK(c.seed == 5);
  CHECK(c.end_s - c.start_s == kSecondsPerDay);

  auto bad = j;
  bad["end"] = "2024-01-01T00:02:00Z";
  CHECK_THROWS_AS(run_config_from_json(bad), SchemaError);
  bad = j;
  bad["estimator"]["name"] = "kernel";
  CHECK_THROWS_AS(run_config_from_json(bad), SchemaError);
  bad = j;
  bad.erase("instruments");
  CHECK_THROWS_AS(run_config_from_json(bad), SchemaError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("interval records round trip through CSV") {
  TickSimConfig t;
  t.seed = 4;
  t.intervals = 5;
  t.arrival_probability = 0.5;
  auto recs = realised_intervals(simulate_ticks(t), t.start_s, t.end_s(), RvConfig{});
  REQUIRE(recs.size() == 5);
  std::stringstream ss;
  write_intervals_csv(ss, recs);
  auto back = read_intervals_csv(ss, "mem");
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].start_s == recs[i].start_s);
    CHECK(back[i].value == recs[i].value);
    CHECK(back[i].zeroed == recs[i].zeroed);
  }
}

TEST_CASE("pipeline: end-to-end on simulated ticks") {
  const auto dir = scratch("smoke");
  auto cfg = run_config_from_json(small_config(dir / "out"));
  auto res = run_pipeline(cfg);
  CHECK(res.exit_code == 0);
  for (const char* name : {"panel.csv", "panel.json", "fit_uni_AAA.json", "fit_multi.json", "spillover.json",
                           "flowgraph.json", "profile_AAA.csv", "hist_BBB.csv", "intervals_BBB.csv", "manifest.json"})
    CHECK(fs::exists(dir / "out" / name));
  for (const auto& e : fs::directory_iterator(dir / "out")) CHECK(e.path().extension() != ".partial");

  auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);

  auto fg = flow_graph_from_json(nlohmann::json::parse(slurp(dir / "out" / "flowgraph.json")));
  CHECK(fg.nodes.size() == 2);
  auto fit = vfit_from_json(nlohmann::json::parse(slurp(dir / "out" / "fit_multi.json")));
  CHECK(fit.instruments == std::vector<std::string>{"AAA", "BBB"});

  std::ifstream prof(dir / "out" / "profile_AAA.csv");
  std::string line;
  int rows = -1;
  while (std::getline(prof, line)) ++rows;
  CHECK(rows == kSlotsPerDay);
}

TEST_CASE("pipeline: identical seeds give byte-identical outputs") {
  const auto dir = scratch("determinism");
  run_pipeline(run_config_from_json(small_config(dir / "a")));
  run_pipeline(run_config_from_json(small_config(dir / "b")));
  for (const char* name : {"fit_multi.json", "fit_uni_BBB.json", "spillover.json", "flowgraph.json", "panel.csv"})
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
}

TEST_CASE("pipeline: a missing tick file fails the ingest stage with exit code 2") {
  const auto dir = scratch("missing");
  auto j = nlohmann::json::parse(R"({"instruments": [{"name": "X", "ticks": "does_not_exist.csv"}],
                                     "start": "2024-01-01", "end": "2024-01-02"})");
  j["output_dir"] = (dir / "out").string();
  auto cfg = run_config_from_json(j, dir);
  try {
    run_pipeline(cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "ingest");
    CHECK(e.exit_code() == 2);
    CHECK(std::string(e.what()).find("does_not_exist.csv") != std::string::npos);
  }
  auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["status"] == "failed");
  CHECK(manifest["failed_stage"] == "ingest");
  CHECK_FALSE(fs::exists(dir / "out" / "panel.csv"));
}
