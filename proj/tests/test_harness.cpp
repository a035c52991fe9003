#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "specverify/harness.hpp"
#include "support.hpp"

using namespace specverify;
using namespace specverify::seqspace;
using harness::AlgoKind;
using harness::ExperimentConfig;
using harness::TrialRecord;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("algorithm and format names parse both ways", "[harness]") {
  REQUIRE(harness::parse_algo("ss") == AlgoKind::ss);
  REQUIRE(harness::parse_algo("bv") == AlgoKind::bv);
  REQUIRE(harness::parse_algo("gbv") == AlgoKind::gbv);
  for (AlgoKind a : {AlgoKind::ss, AlgoKind::bv, AlgoKind::gbv})
    REQUIRE(harness::parse_algo(harness::algo_name(a)) == a);
  REQUIRE_THROWS_AS(harness::parse_algo("greedy"), InputError);

  REQUIRE(harness::parse_format("csv") == harness::Format::csv);
  REQUIRE(harness::parse_format("json") == harness::Format::json);
  REQUIRE_THROWS_AS(harness::parse_format("yaml"), InputError);
}

TEST_CASE("mc estimate is exact when draft equals target", "[harness]") {
  ModelPair pair = gen_model_pair(3, 2, 2, identical_family());
  for (AlgoKind alg : {AlgoKind::ss, AlgoKind::bv, AlgoKind::gbv}) {
    harness::McEstimate mc = harness::mc_block_efficiency(alg, pair, 1, 400, 9);
    REQUIRE(mc.mean == 3.0);  // every draft token accepted, plus the correction
    REQUIRE(mc.se == 0.0);
    REQUIRE(mc.trials == 400);
  }
}

TEST_CASE("mc estimate brackets the exact efficiencies", "[harness]") {
  ModelPair pair = svtest::make_i1();

  harness::McEstimate bv = harness::mc_block_efficiency(AlgoKind::bv, pair, 1, 100'000, 2024);
  REQUIRE(bv.se > 0.0);
  REQUIRE(bv.se < 0.01);
  REQUIRE_THAT(bv.mean, WithinAbs(1.7, 4.0 * bv.se));

  harness::McEstimate gbv = harness::mc_block_efficiency(AlgoKind::gbv, pair, 2, 100'000, 2024);
  REQUIRE_THAT(gbv.mean, WithinAbs(1.91, 4.0 * gbv.se));
}

TEST_CASE("mc estimate replays bitwise and validates input", "[harness]") {
  ModelPair pair = gen_model_pair(17, 2, 2, dirichlet_family());
  harness::McEstimate a = harness::mc_block_efficiency(AlgoKind::gbv, pair, 3, 5000, 77);
  harness::McEstimate b = harness::mc_block_efficiency(AlgoKind::gbv, pair, 3, 5000, 77);
  REQUIRE(a.mean == b.mean);
  REQUIRE(a.se == b.se);

  harness::McEstimate c = harness::mc_block_efficiency(AlgoKind::gbv, pair, 3, 5000, 78);
  REQUIRE(a.mean != c.mean);

  REQUIRE_THROWS_AS(harness::mc_block_efficiency(AlgoKind::bv, pair, 1, 0, 1), InputError);
  REQUIRE_THROWS_AS(harness::mc_block_efficiency(AlgoKind::gbv, pair, 0, 10, 1), InputError);
  REQUIRE_THROWS_AS(harness::mc_block_efficiency(AlgoKind::ss, pair, 2, 10, 1), InputError);
  REQUIRE_THROWS_AS(harness::mc_block_efficiency(AlgoKind::bv, pair, 2, 10, 1), InputError);
}

TEST_CASE("sweep emits the full grid with per-row errors", "[harness]") {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.families = {dirichlet_family()};
  cfg.vocab_sizes = {2};
  cfg.horizons = {1};
  cfg.path_counts = {1, 2};
  cfg.algorithms = {AlgoKind::bv, AlgoKind::gbv};
  cfg.trials = 2000;

  std::vector<TrialRecord> recs = harness::run_sweep(cfg);
  REQUIRE(recs.size() == 4);

  for (const TrialRecord& r : recs) {
    REQUIRE(r.instance == "dirichlet(alpha=1)-V2-L1");
    REQUIRE(r.family == "dirichlet(alpha=1)");
    REQUIRE(r.vocab == 2);
    REQUIRE(r.horizon == 1);
    REQUIRE(r.trials == 2000);
    REQUIRE(r.seed != 0);
  }

  REQUIRE(recs[0].algorithm == "bv");
  REQUIRE(recs[0].paths == 1);
  REQUIRE(recs[0].error.empty());
  REQUIRE(recs[0].mc_mean >= 1.0);
  REQUIRE(recs[0].mc_mean <= 2.0);
  REQUIRE_THAT(recs[0].exact, WithinAbs(recs[0].single_lp, 1e-9));
  REQUIRE_THAT(recs[0].multi_lp, WithinAbs(recs[0].single_lp, 1e-7));

  REQUIRE(recs[1].algorithm == "gbv");
  REQUIRE(recs[1].paths == 1);
  REQUIRE_THAT(recs[1].exact, WithinAbs(recs[0].exact, 1e-9));

  // single-path verifier asked for two paths: row survives with the error set
  REQUIRE(recs[2].algorithm == "bv");
  REQUIRE(recs[2].paths == 2);
  REQUIRE_FALSE(recs[2].error.empty());
  REQUIRE(std::isnan(recs[2].mc_mean));
  REQUIRE(std::isnan(recs[2].exact));

  REQUIRE(recs[3].algorithm == "gbv");
  REQUIRE(recs[3].paths == 2);
  REQUIRE(recs[3].error.empty());
  REQUIRE(recs[3].multi_lp >= recs[1].multi_lp - 1e-7);
  REQUIRE(recs[3].exact <= recs[3].multi_lp + 1e-7);
  REQUIRE_THAT(recs[3].mc_mean, WithinAbs(recs[3].exact, 5.0 * recs[3].mc_stderr + 1e-6));
}

TEST_CASE("sweep records satisfy the column invariants", "[harness]") {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.families = {dirichlet_family(), sharpened_family(1.0, 0.5)};
  cfg.vocab_sizes = {2, 3};
  cfg.horizons = {1, 2};
  cfg.path_counts = {1, 2};
  cfg.algorithms = {AlgoKind::ss, AlgoKind::bv, AlgoKind::gbv};
  cfg.trials = 400;

  std::vector<TrialRecord> recs = harness::run_sweep(cfg);
  REQUIRE(recs.size() == 2 * 2 * 2 * 2 * 3);

  for (const TrialRecord& r : recs) {
    CAPTURE(r.instance, r.paths, r.algorithm, r.error);
    if (r.algorithm != "gbv" && r.paths > 1) {
      REQUIRE_FALSE(r.error.empty());
      continue;
    }
    REQUIRE(r.error.empty());
    REQUIRE(r.mc_mean >= 1.0);
    REQUIRE(r.mc_mean <= r.horizon + 1.0);
    REQUIRE(r.mc_stderr >= 0.0);
    REQUIRE_FALSE(std::isnan(r.exact));
    REQUIRE_FALSE(std::isnan(r.single_lp));
    REQUIRE_FALSE(std::isnan(r.multi_lp));
    REQUIRE(r.exact <= r.multi_lp + 1e-7);
    REQUIRE(r.single_lp >= 1.0 - 1e-9);
    REQUIRE(r.single_lp <= r.horizon + 1.0 + 1e-9);
  }
}

TEST_CASE("sweep reruns are byte-identical", "[harness]") {
  ExperimentConfig cfg;
  cfg.seed = 23;
  cfg.families = {sharpened_family(2.0, 0.7)};
  cfg.vocab_sizes = {2};
  cfg.horizons = {1, 2};
  cfg.path_counts = {1, 2};
  cfg.algorithms = {AlgoKind::bv, AlgoKind::gbv};
  cfg.trials = 1500;

  std::vector<TrialRecord> first = harness::run_sweep(cfg);
  std::vector<TrialRecord> second = harness::run_sweep(cfg);
  REQUIRE(harness::to_csv(first) == harness::to_csv(second));
  REQUIRE(harness::to_json(first) == harness::to_json(second));
}

TEST_CASE("gbv trend classifies direction per instance", "[harness]") {
  auto rec = [](const std::string& inst, int k, double exact, const char* alg = "gbv",
                const char* err = "") {
    TrialRecord r;
    r.instance = inst;
    r.algorithm = alg;
    r.paths = k;
    r.exact = exact;
    r.error = err;
    return r;
  };
  std::vector<TrialRecord> recs = {
      rec("up", 3, 1.943),  // out of order on purpose
      rec("up", 1, 1.7),
      rec("up", 2, 1.91),
      rec("down", 1, 1.9),
      rec("down", 2, 1.89),
      rec("down", 2, 9.9, "bv"),                       // wrong algorithm, ignored
      rec("down", 3, 9.9, "gbv", "blew up"),           // failed row, ignored
      rec("lonely", 1, 1.5),                           // single point, no trend
      rec("empty", 2, std::numeric_limits<double>::quiet_NaN()),
  };
  std::vector<harness::TrendRow> rows = harness::gbv_trend(recs);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].instance == "up");
  REQUIRE(rows[0].path_counts == std::vector<int>{1, 2, 3});
  REQUIRE(rows[0].exact == std::vector<double>{1.7, 1.91, 1.943});
  REQUIRE(rows[0].nondecreasing);
  REQUIRE(rows[1].instance == "down");
  REQUIRE_FALSE(rows[1].nondecreasing);

  std::string text = harness::trend_to_text(rows);
  REQUIRE_THAT(text, ContainsSubstring("up: gbv exact over k=1,2,3 is 1.7, 1.91, 1.943 (nondecreasing)"));
  REQUIRE_THAT(text, ContainsSubstring("down: "));
  REQUIRE_THAT(text, ContainsSubstring("(not monotone up)"));
}

TEST_CASE("csv layout is stable", "[harness]") {
  std::string header = harness::to_csv({});
  REQUIRE(header ==
          "instance,family,vocab,horizon,paths,algorithm,mc_mean,mc_stderr,exact,single_lp,"
          "multi_lp,trials,seed,error\n");
  REQUIRE(std::count(header.begin(), header.end(), ',') == 13);

  TrialRecord r;
  r.instance = "i";
  r.family = "f";
  r.vocab = 2;
  r.horizon = 1;
  r.paths = 1;
  r.algorithm = "bv";
  r.mc_mean = 1.5;
  r.trials = 100;
  r.seed = 7;
  REQUIRE(harness::to_csv({r}) ==
          harness::to_csv({}) + "i,f,2,1,1,bv,1.5,,,,,100,7,\n");

  r.error = "bad, \"thing\"";
  REQUIRE_THAT(harness::to_csv({r}), ContainsSubstring("\"bad, \"\"thing\"\"\""));
}

TEST_CASE("json serialization round trips as a fixpoint", "[harness]") {
  TrialRecord a;
  a.instance = "dirichlet(alpha=1)-V2-L1";
  a.family = "dirichlet(alpha=1)";
  a.vocab = 2;
  a.horizon = 1;
  a.paths = 2;
  a.algorithm = "gbv";
  a.mc_mean = 1.90876543;  // 9 significant digits, survives serialization exactly
  a.mc_stderr = 0.0021;
  a.exact = 1.91;
  a.single_lp = 1.7;
  a.multi_lp = 1.91;
  a.trials = 100000;
  a.seed = 1234567890123456789ull;

  TrialRecord b = a;
  b.algorithm = "bv";
  b.paths = 2;
  b.mc_mean = std::numeric_limits<double>::quiet_NaN();
  b.mc_stderr = std::numeric_limits<double>::quiet_NaN();
  b.exact = std::numeric_limits<double>::quiet_NaN();
  b.multi_lp = std::numeric_limits<double>::quiet_NaN();
  b.error = "needs \"k = 1\"";

  std::string text = harness::to_json({a, b});
  std::vector<TrialRecord> back = harness::records_from_json(text);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].seed == a.seed);
  REQUIRE(back[0].mc_mean == a.mc_mean);
  REQUIRE(std::isnan(back[1].exact));
  REQUIRE(back[1].error == b.error);
  REQUIRE(harness::to_json(back) == text);

  REQUIRE(harness::to_json({}) == "[]\n");
  REQUIRE(harness::records_from_json("[]").empty());
  REQUIRE_THROWS_AS(harness::records_from_json("{"), InputError);
  REQUIRE_THROWS_AS(harness::records_from_json("{}"), InputError);
  REQUIRE_THROWS_AS(harness::records_from_json("[3]"), InputError);
  REQUIRE_THROWS_AS(harness::records_from_json("[{\"instance\": \"x\"}]"), InputError);
}

TEST_CASE("emit writes files and reports path errors", "[harness]") {
  TrialRecord r;
  r.instance = "x";
  r.family = "f";
  r.algorithm = "bv";
  r.mc_mean = 1.25;
  std::vector<TrialRecord> recs = {r};

  std::string csv_path = "harness_emit_tmp.csv";
  harness::emit(recs, harness::Format::csv, csv_path);
  REQUIRE(slurp(csv_path) == harness::to_csv(recs));
  std::remove(csv_path.c_str());

  std::string json_path = "harness_emit_tmp.json";
  harness::emit(recs, harness::Format::json, json_path);
  REQUIRE(slurp(json_path) == harness::to_json(recs));
  std::remove(json_path.c_str());

  REQUIRE_THROWS_MATCHES(harness::emit(recs, harness::Format::csv, "no-such-dir/out.csv"),
                         InputError, Catch::Matchers::MessageMatches(ContainsSubstring("no-such-dir/out.csv")));
}

TEST_CASE("config files parse with defaults and validation", "[harness]") {
  ExperimentConfig defaults = harness::config_from_json("{}");
  REQUIRE(defaults.seed == 1);
  REQUIRE(defaults.families.size() == 1);
  REQUIRE(defaults.families[0].kind == seqspace::GenFamily::Kind::dirichlet);
  REQUIRE(defaults.algorithms == std::vector<AlgoKind>{AlgoKind::bv});
  REQUIRE(defaults.trials == 10'000);
  REQUIRE(defaults.format == harness::Format::csv);

  ExperimentConfig cfg = harness::config_from_json(R"({
    "seed": 42,
    "families": [{"kind": "sharpened", "alpha": 2.0, "temperature": 0.5}, "identical"],
    "vocab_sizes": [2, 3],
    "horizons": [1, 2],
    "path_counts": [1, 2, 3],
    "algorithms": ["ss", "bv", "gbv"],
    "trials": 500,
    "cap": 100000,
    "format": "json"
  })");
  REQUIRE(cfg.seed == 42);
  REQUIRE(cfg.families.size() == 2);
  REQUIRE(cfg.families[0].kind == seqspace::GenFamily::Kind::sharpened);
  REQUIRE(cfg.families[0].alpha == 2.0);
  REQUIRE(cfg.families[0].temperature == 0.5);
  REQUIRE(cfg.families[1].kind == seqspace::GenFamily::Kind::identical);
  REQUIRE(cfg.vocab_sizes == std::vector<int>{2, 3});
  REQUIRE(cfg.path_counts == std::vector<int>{1, 2, 3});
  REQUIRE(cfg.algorithms.size() == 3);
  REQUIRE(cfg.trials == 500);
  REQUIRE(cfg.cap == 100000);
  REQUIRE(cfg.format == harness::Format::json);

  REQUIRE_THROWS_AS(harness::config_from_json("[1]"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"algorithms\": [\"x\"]}"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"trials\": 0}"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"vocab_sizes\": [1]}"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"horizons\": []}"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"families\": [{\"kind\": \"flat\"}]}"), InputError);
  REQUIRE_THROWS_AS(harness::config_from_json("{\"trials\": \"many\"}"), InputError);

  std::string path = "harness_config_tmp.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 9, "trials": 250})";
  }
  ExperimentConfig loaded = harness::load_config(path);
  std::remove(path.c_str());
  REQUIRE(loaded.seed == 9);
  REQUIRE(loaded.trials == 250);
  REQUIRE_THROWS_AS(harness::load_config("no-such-config.json"), InputError);
}

TEST_CASE("invariant suite passes on fresh instances", "[harness][slow]") {
  harness::InvariantReport report = harness::invariant_suite(1, 4);
  INFO(harness::report_to_text(report));
  REQUIRE(report.checks.size() >= 20);
  for (const harness::CheckOutcome& c : report.checks) {
    CAPTURE(c.name, c.first_failure);
    REQUIRE(c.runs == 4);
    REQUIRE(c.failures == 0);
  }
  REQUIRE(report.all_passed());

  std::string text = harness::report_to_text(report);
  REQUIRE_THAT(text, ContainsSubstring("PASS gbv-target-matching"));
  REQUIRE_THAT(text, !ContainsSubstring("FAIL"));

  nlohmann::json doc = nlohmann::json::parse(harness::report_to_json(report));
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == report.checks.size());
  REQUIRE(doc[0].at("runs") == 4);
  REQUIRE(doc[0].at("failures") == 0);
  REQUIRE(doc[0].at("first_failure").is_null());

  REQUIRE_THROWS_AS(harness::invariant_suite(1, 0), InputError);
}

TEST_CASE("invariant report renders failures", "[harness]") {
  harness::InvariantReport report;
  report.checks.push_back({"alpha", 3, 0, ""});
  report.checks.push_back({"beta", 3, 2, "V=2 L=1: broke"});
  REQUIRE_FALSE(report.all_passed());
  std::string text = harness::report_to_text(report);
  REQUIRE_THAT(text, ContainsSubstring("PASS alpha (3 runs)"));
  REQUIRE_THAT(text, ContainsSubstring("FAIL beta (2/3): V=2 L=1: broke"));
  nlohmann::json doc = nlohmann::json::parse(harness::report_to_json(report));
  REQUIRE(doc[1].at("first_failure") == "V=2 L=1: broke");
}
