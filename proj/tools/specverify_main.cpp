// specverify: generation, simulation, enumeration, bounds, sweeps, and the
// invariant battery behind one binary.  Results go to standard output,
// diagnostics to standard error.  Exit codes: 0 success, 1 bad input or a
// failed validation, 2 internal assertion.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specverify/harness.hpp"

using namespace specverify;
using harness::AlgoKind;
using seqspace::ModelPair;

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::string(buf);
}

std::string num_or_null(double v) { return std::isnan(v) ? "null" : fmt9(v); }

// SPECLAB_CAP overrides every enumeration cap in the process.
std::uint64_t enumeration_cap() {
  const char* raw = std::getenv("SPECLAB_CAP");
  if (!raw) return seqspace::kDefaultEnumerationCap;
  char* end = nullptr;
  unsigned long long value = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0' || value == 0)
    throw InputError(std::string("SPECLAB_CAP must be a positive integer, got \"") + raw + "\"");
  return static_cast<std::uint64_t>(value);
}

struct GenSpec {
  std::uint64_t seed = 1;
  int vocab = 2;
  int horizon = 1;
  std::string family = "dirichlet";
  double alpha = 1.0;
  double temperature = 1.0;
};

seqspace::GenFamily family_of(const GenSpec& spec) {
  if (spec.family == "dirichlet") return seqspace::dirichlet_family(spec.alpha);
  if (spec.family == "sharpened") return seqspace::sharpened_family(spec.alpha, spec.temperature);
  if (spec.family == "identical") return seqspace::identical_family(spec.alpha);
  throw InputError("unknown family \"" + spec.family +
                   "\" (expected dirichlet, sharpened or identical)");
}

ModelPair pair_from(const std::string& trace_path, const GenSpec& spec) {
  if (!trace_path.empty()) return trace_io::load_trace(trace_path);
  return seqspace::gen_model_pair(spec.seed, spec.vocab, spec.horizon, family_of(spec));
}

// exact block efficiency for one algorithm, NaN when the instance is over cap
double exact_efficiency(AlgoKind alg, const ModelPair& pair, int paths, std::uint64_t cap) {
  try {
    switch (alg) {
      case AlgoKind::ss:
        return verify::exact_output_dist_single(verify::Algorithm::ss, pair, nullptr, cap)
            .expected_len();
      case AlgoKind::bv:
        return verify::bv_efficiency_analytic(pair);
      case AlgoKind::gbv:
        return lp::objective_given_skew(pair,
                                        multipath::build_skewed_draft(pair, paths, cap).dist);
    }
  } catch (const ResourceError&) {
  }
  return std::numeric_limits<double>::quiet_NaN();
}

int run_gen_model(const GenSpec& spec, const std::string& out_path) {
  ModelPair pair = seqspace::gen_model_pair(spec.seed, spec.vocab, spec.horizon, family_of(spec));
  if (out_path.empty()) {
    std::cout << trace_io::trace_to_string(pair);
  } else {
    trace_io::save_trace(pair, out_path);
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

int run_simulate(const std::string& trace_path, const GenSpec& spec, const std::string& algo,
                 int paths, long trials, const std::string& format) {
  ModelPair pair = pair_from(trace_path, spec);
  AlgoKind alg = harness::parse_algo(algo);
  harness::McEstimate mc = harness::mc_block_efficiency(alg, pair, paths, trials, spec.seed);
  double exact = exact_efficiency(alg, pair, paths, enumeration_cap());

  if (format == "human") {
    std::cout << "algorithm=" << algo << " paths=" << paths << " trials=" << trials
              << " seed=" << spec.seed << "\n"
              << "mc_mean=" << fmt9(mc.mean) << " mc_stderr=" << fmt9(mc.se)
              << " exact=" << (std::isnan(exact) ? "n/a" : fmt9(exact)) << "\n";
  } else if (format == "json") {
    std::cout << "{\"algorithm\": \"" << algo << "\", \"paths\": " << paths
              << ", \"trials\": " << trials << ", \"seed\": " << spec.seed
              << ", \"mc_mean\": " << fmt9(mc.mean) << ", \"mc_stderr\": " << fmt9(mc.se)
              << ", \"exact\": " << num_or_null(exact) << "}\n";
  } else {
    throw InputError("unknown format \"" + format + "\" (expected json or human)");
  }
  return 0;
}

int run_enumerate(const std::string& trace_path, const std::string& algo, int paths, bool human) {
  ModelPair pair = trace_io::load_trace(trace_path);
  AlgoKind alg = harness::parse_algo(algo);
  std::uint64_t cap = enumeration_cap();
  if (alg != AlgoKind::gbv && paths != 1)
    throw InputError("enumerate: single-path algorithms require --k 1");

  verify::OutputDistribution dist =
      alg == AlgoKind::gbv
          ? multipath::exact_output_dist_multi(pair, paths, cap)
          : verify::exact_output_dist_single(
                alg == AlgoKind::ss ? verify::Algorithm::ss : verify::Algorithm::bv, pair,
                nullptr, cap);

  lp::CheckResult target = lp::target_match_check(dist, pair);
  lp::CheckResult prefix = lp::prefix_match_check(dist, pair, paths);

  if (human) {
    for (const auto& [seq, mass] : dist.probs)
      std::cout << "\"" << seqspace::context_key(seq) << "\"  " << fmt9(mass) << "\n";
    std::cout << "efficiency=" << fmt9(dist.expected_len())
              << " target_match=" << (target.ok ? "pass" : "FAIL")
              << " prefix_match=" << (prefix.ok ? "pass" : "FAIL") << "\n";
  } else {
    std::cout << "{\"algorithm\": \"" << algo << "\", \"paths\": " << paths
              << ", \"efficiency\": " << fmt9(dist.expected_len())
              << ", \"target_match\": " << (target.ok ? "true" : "false")
              << ", \"prefix_match\": " << (prefix.ok ? "true" : "false") << ", \"output\": {";
    bool first = true;
    for (const auto& [seq, mass] : dist.probs) {
      if (!first) std::cout << ", ";
      first = false;
      std::cout << "\"" << seqspace::context_key(seq) << "\": " << fmt9(mass);
    }
    std::cout << "}}\n";
  }
  if (!target.ok) std::cerr << "target matching failed: " << target.detail << "\n";
  if (!prefix.ok) std::cerr << "prefix matching failed: " << prefix.detail << "\n";
  return target.ok && prefix.ok ? 0 : 1;
}

int run_bounds(const std::string& trace_path, int paths, bool human, bool dump) {
  ModelPair pair = trace_io::load_trace(trace_path);
  std::uint64_t cap = enumeration_cap();
  if (dump) {
    std::cout << lp::dump_lp(lp::multi_lp_build(pair, paths, cap));
    return 0;
  }
  double single = lp::single_lp_opt(pair).value;
  double multi = lp::multi_lp_opt(pair, paths, cap);
  multipath::SkewedDraft skew = multipath::build_skewed_draft(pair, paths, cap);
  double objective = lp::objective_given_skew(pair, skew.dist);
  double lower = std::numeric_limits<double>::quiet_NaN();
  try {
    lower = lp::skew_lower_bound(pair, skew.dist);
  } catch (const InputError& e) {
    std::cerr << "lower bound unavailable: " << e.what() << "\n";
  }

  if (human) {
    std::cout << "single=" << fmt9(single) << "\nmulti=" << fmt9(multi)
              << "\ngbv_objective=" << fmt9(objective)
              << "\nlower_bound=" << (std::isnan(lower) ? "n/a" : fmt9(lower)) << "\n";
  } else {
    std::cout << "{\"paths\": " << paths << ", \"single\": " << fmt9(single)
              << ", \"multi\": " << fmt9(multi) << ", \"gbv_objective\": " << fmt9(objective)
              << ", \"lower_bound\": " << num_or_null(lower) << "}\n";
  }
  return 0;
}

int run_sweep_cmd(const std::string& config_path, const std::string& out_path) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  if (std::getenv("SPECLAB_CAP")) cfg.cap = enumeration_cap();
  std::vector<harness::TrialRecord> records = harness::run_sweep(cfg);
  std::string trend = harness::trend_to_text(harness::gbv_trend(records));
  if (out_path.empty()) {
    std::cout << (cfg.format == harness::Format::csv ? harness::to_csv(records)
                                                     : harness::to_json(records));
    std::cerr << trend;
  } else {
    harness::emit(records, cfg.format, out_path);
    std::cerr << "wrote " << records.size() << " records to " << out_path << "\n";
    std::cout << trend;
  }
  return 0;
}

int run_check(std::uint64_t seed, int n) {
  harness::InvariantReport report = harness::invariant_suite(seed, n);
  std::cout << harness::report_to_text(report);
  return report.all_passed() ? 0 : 1;
}

int run_trace_validate(const std::string& trace_path) {
  ModelPair pair = trace_io::load_trace(trace_path);
  std::cout << "{\"vocab_size\": " << pair.vocab << ", \"horizon\": " << pair.horizon
            << ", \"zero_permitting\": " << (pair.zero_permitting ? "true" : "false")
            << ", \"contexts\": " << pair.ctx_tree().total_nodes() << "}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification-algorithm laboratory for speculative decoding"};
  app.require_subcommand(1);

  GenSpec spec;
  std::string trace_path, out_path, algo = "bv", format = "json", config_path;
  int paths = 1;
  long trials = 10'000;
  int check_n = 20;
  bool human = false, dump = false;

  CLI::App* gen = app.add_subcommand("gen-model", "generate a synthetic target/draft trace");
  gen->add_option("--seed", spec.seed, "generator seed")->required();
  gen->add_option("--vocab", spec.vocab, "vocabulary size")->required();
  gen->add_option("--horizon", spec.horizon, "draft block length")->required();
  gen->add_option("--family", spec.family, "dirichlet | sharpened | identical");
  gen->add_option("--alpha", spec.alpha, "Dirichlet concentration");
  gen->add_option("--temperature", spec.temperature, "sharpened-family temperature");
  gen->add_option("--out", out_path, "write the trace here instead of stdout");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo block efficiency");
  sim->add_option("--trace", trace_path, "trace file (otherwise generate from --seed...)");
  sim->add_option("--seed", spec.seed, "model seed when generating; always the trial seed");
  sim->add_option("--vocab", spec.vocab, "vocabulary size when generating");
  sim->add_option("--horizon", spec.horizon, "block length when generating");
  sim->add_option("--family", spec.family, "generator family when generating");
  sim->add_option("--alpha", spec.alpha, "Dirichlet concentration");
  sim->add_option("--temperature", spec.temperature, "sharpened-family temperature");
  sim->add_option("--algo", algo, "ss | bv | gbv")->required();
  sim->add_option("--k", paths, "number of drafted paths (gbv)");
  sim->add_option("--trials", trials, "Monte Carlo trials");
  sim->add_option("--format", format, "json | human");

  CLI::App* enumerate = app.add_subcommand("enumerate", "exact output distribution + checks");
  enumerate->add_option("--trace", trace_path, "trace file")->required();
  enumerate->add_option("--algo", algo, "ss | bv | gbv")->required();
  enumerate->add_option("--k", paths, "number of drafted paths (gbv)");
  enumerate->add_flag("--human", human, "table output instead of JSON");

  CLI::App* bounds = app.add_subcommand("bounds", "LP optima, analytic objective, ratio floor");
  bounds->add_option("--trace", trace_path, "trace file")->required();
  bounds->add_option("--k", paths, "number of drafted paths");
  bounds->add_flag("--human", human, "key=value lines instead of JSON");
  bounds->add_flag("--dump-lp", dump, "print the multi-path program instead of solving");

  CLI::App* sweep = app.add_subcommand("sweep", "run an experiment grid from a config file");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--out", out_path, "write records here instead of stdout");

  CLI::App* check = app.add_subcommand("check", "run the cross-module invariant battery");
  check->add_option("--seed", spec.seed, "battery seed");
  check->add_option("--n", check_n, "runs per check");

  CLI::App* validate = app.add_subcommand("trace-validate", "parse and validate a trace file");
  validate->add_option("--trace", trace_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_model(spec, out_path);
    if (sim->parsed()) return run_simulate(trace_path, spec, algo, paths, trials, format);
    if (enumerate->parsed()) return run_enumerate(trace_path, algo, paths, human);
    if (bounds->parsed()) return run_bounds(trace_path, paths, human, dump);
    if (sweep->parsed()) return run_sweep_cmd(config_path, out_path);
    if (check->parsed()) return run_check(spec.seed, check_n);
    if (validate->parsed()) return run_trace_validate(trace_path);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ResourceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;  // unreachable: require_subcommand guarantees one branch ran
}
