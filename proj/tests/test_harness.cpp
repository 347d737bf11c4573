#include "irsloc/irsloc.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

using namespace irsloc;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("irsloc_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.trials = 2;
  s.scene.nx = 2;
  s.scene.ny = 2;
  s.chanest.snr_db = {10.0, 20.0};
  s.chanest.ny = {2};
  s.localization.ny = {2};
  s.localization.max_cycles = 3;
  s.localization.pb_w = {50.0};
  s.scene.target_round_trip_loss = true;
  return s;
}

}  // namespace

TEST_CASE("config parsing fills fields and keeps defaults") {
  const auto spec = spec_from_json(json::parse(R"({"name": "x", "trials": 7, "scene": {"M": 6, "ny": 3},
      "localization": {"pb_w": [10, 50]}})"));
  CHECK(spec.name == "x");
  CHECK(spec.trials == 7);
  CHECK(spec.scene.M == 6);
  CHECK(spec.scene.ny == 3);
  CHECK(spec.scene.nx == 5);
  CHECK(spec.localization.pb_w == std::vector<double>{10.0, 50.0});
  CHECK(spec.localization.L == 8);
}

TEST_CASE("config rejects unknown keys with their path") {
  CHECK_THROWS_WITH(spec_from_json(json::parse(R"({"scene": {"Mx": 3}})")), ContainsSubstring("scene.Mx"));
  CHECK_THROWS_WITH(spec_from_json(json::parse(R"({"bogus": 1})")), ContainsSubstring("bogus"));
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"trials": "many"})")), ConfigError);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"([1, 2])")), ConfigError);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"scene": 3})")), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"trials": 0})")), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"localization": {"arms": ["greedy"]}})")), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"localization": {"threshold": 1.5}})")), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"scene": {"M": 1}})")), std::invalid_argument);
}

TEST_CASE("desk-scale section is merged only on request") {
  const auto doc = json::parse(R"({"trials": 100, "scene": {"ny": 4, "M": 6},
      "desk_scale": {"trials": 5, "scene": {"ny": 2}}})");
  const auto full = spec_from_json(doc);
  CHECK(full.trials == 100);
  CHECK(full.scene.ny == 4);
  const auto desk = spec_from_json(doc, true);
  CHECK(desk.trials == 5);
  CHECK(desk.scene.ny == 2);
  CHECK(desk.scene.M == 6);
  CHECK_THROWS_AS(spec_from_json(json::parse(R"({"trials": 3})"), true), ConfigError);
}

TEST_CASE("spec round-trips through JSON") {
  auto spec = tiny_spec();
  spec.localization.arms = {"random"};
  spec.master_seed = 1234567890123ULL;
  const json j = spec_to_json(spec);
  const auto back = spec_from_json(j);
  CHECK(spec_to_json(back) == j);
}

TEST_CASE("shipped configs load in both scales") {
  for (const auto& e : fs::directory_iterator(IRSLOC_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    INFO(e.path().string());
    CHECK_NOTHROW(load_spec(e.path().string()));
    CHECK_NOTHROW(load_spec(e.path().string(), true));
  }
  CHECK_THROWS_AS(load_spec("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("pilot power realizes the requested received SNR") {
  SceneConfig cfg;
  const double pl = path_loss(cfg.bs_irs_distance(), cfg);
  for (double snr : {5.0, 15.0, 25.0})
    CHECK_THAT(pilot_power_for_snr(snr, cfg) * pl * pl / cfg.sigma2_w(), WithinRel(db_to_linear(snr), 1e-12));
}

TEST_CASE("seed labels separate nearby SNR values") {
  CHECK(snr_label(15.0) != snr_label(15.001));
  CHECK(snr_label(-5.0) != snr_label(5.0));
  CHECK(derive_seed(1, {1, 2}) != derive_seed(1, {2, 1}));
}

TEST_CASE("equal-overhead pilot length") {
  ChanestSweep sw;
  sw.C = 0;
  CHECK(chanest_pilot_length(sw, 4, 1, 25) == 0);
  sw.overhead_ref_Mt = 2;
  for (int M : {4, 5, 6}) {
    CHECK(chanest_pilot_length(sw, M, 1, 25) == 25 * (M - 1));
    CHECK(chanest_pilot_length(sw, M, 2, 25) == 50);
  }
}

TEST_CASE("chanest campaign is deterministic and shares channels across SNR") {
  const auto spec = tiny_spec();
  const auto a = run_chanest_campaign(spec);
  const auto b = run_chanest_campaign(spec);
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].ne == b[k].ne);
  CHECK(a[0].ne != a[1].ne);
  CHECK(!a[0].trace.empty());
  CHECK(a[1].ne_mean < a[0].ne_mean);
}

TEST_CASE("localization arms see the same channels") {
  auto spec = tiny_spec();
  const auto rs = run_localization_campaign(spec);
  REQUIRE(rs.size() == 2);
  const auto* opt = find_point(rs, "optimized", 50.0);
  const auto* rnd = find_point(rs, "random", 50.0);
  REQUIRE(opt);
  REQUIRE(rnd);
  for (int t = 0; t < spec.trials; ++t) {
    CHECK(opt->trials[t].ne == rnd->trials[t].ne);
    CHECK(opt->trials[t].true_index == 1);
    CHECK(static_cast<int>(opt->trials[t].argmax.size()) == spec.localization.max_cycles);
    // the first cycle uses the same fixed waveform in both arms
    CHECK(opt->trials[t].diagnostics.front().residual == rnd->trials[t].diagnostics.front().residual);
  }
}

TEST_CASE("point summaries") {
  LocPointResult r;
  r.max_cycles = 4;
  for (int c : {2, 5, 3, 5}) {
    LocTrialRecord t;
    t.cycles_to_threshold = c;
    t.terminated = c <= 4;
    t.correct = c == 2;
    t.true_index = 0;
    t.argmax.assign(4, c == 2 ? 0 : 1);
    r.trials.push_back(t);
  }
  CHECK(r.median_cycles() == 4.0);
  CHECK(r.terminated_by(2) == 0.25);
  CHECK(r.terminated_by(4) == 0.5);
  CHECK(r.terminated_correct_by(4) == 0.25);
  CHECK(r.correct_probability() == std::vector<double>(4, 0.25));
}

TEST_CASE("number formatting") {
  CHECK(fmt_num(0.1) == "0.1");
  CHECK(fmt_num(50.0) == "50");
  CHECK(fmt_num(1.0 / 3.0) == "0.3333333333");
  CHECK(fmt_num(-2.5e-12) == "-2.5e-12");
}

TEST_CASE("CSV writer emits header, rows and a manifest footer") {
  const auto dir = scratch_dir("csv");
  const auto path = (dir / "t.csv").string();
  {
    CsvWriter w(path, "irsloc.test.v1", {"a", "b", "c", "d"});
    w.row(std::string("x"), 1, 0.25, true);
  }
  CHECK(slurp(path) == "a,b,c,d\nx,1,0.25,1\n# manifest=manifest.json schema=irsloc.test.v1\n");
  CHECK_THROWS_AS(CsvWriter((dir / "missing" / "t.csv").string(), "s", {"a"}), std::runtime_error);
}

TEST_CASE("manifest records the subcommand and the effective spec") {
  const auto dir = scratch_dir("manifest");
  const auto spec = tiny_spec();
  write_manifest((dir / "manifest.json").string(), "chanest", spec, {"chanest.csv"});
  const json m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["schema"] == "irsloc.manifest.v1");
  CHECK(m["subcommand"] == "chanest");
  CHECK(m["outputs"] == json::array({"chanest.csv"}));
  CHECK(spec_to_json(spec_from_json(m["spec"])) == spec_to_json(spec));
}
