#pragma once

// Experiment plumbing: Monte Carlo block-efficiency estimation, instance
// sweeps over generator grids, CSV/JSON result serialization, and a battery
// of cross-module invariant checks on freshly generated instances.
//
// Determinism contract: every trial draws its randomness from a stream keyed
// by (seed, trial index), every sweep cell keys its model seed by (seed,
// family index, V, L), and floats serialize with 9 significant digits, so a
// rerun of the same config reproduces identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "specverify/lp_oracle.hpp"
#include "specverify/rng.hpp"
#include "specverify/seqspace.hpp"
#include "specverify/trace_io.hpp"
#include "specverify/verify_multi.hpp"
#include "specverify/verify_single.hpp"

namespace specverify::harness {

using seqspace::DistVec;
using seqspace::GenFamily;
using seqspace::ModelPair;
using seqspace::TokenSeq;

// ============================================================================
// algorithm taxonomy
// ============================================================================

enum class AlgoKind { ss, bv, gbv };

inline const char* algo_name(AlgoKind a) {
  switch (a) {
    case AlgoKind::ss: return "ss";
    case AlgoKind::bv: return "bv";
    case AlgoKind::gbv: return "gbv";
  }
  return "?";
}

inline AlgoKind parse_algo(const std::string& name) {
  if (name == "ss") return AlgoKind::ss;
  if (name == "bv") return AlgoKind::bv;
  if (name == "gbv") return AlgoKind::gbv;
  throw InputError("unknown algorithm \"" + name + "\" (expected ss, bv or gbv)");
}

namespace detail {

inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::string(buf);
}

inline std::string family_label(const GenFamily& fam) {
  std::string out = seqspace::family_name(fam.kind);
  out += "(alpha=" + fmt9(fam.alpha);
  if (fam.kind == GenFamily::Kind::sharpened) out += ";temp=" + fmt9(fam.temperature);
  return out + ")";
}

}  // namespace detail

// ============================================================================
// Monte Carlo estimation
// ============================================================================

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean; 0 for a single trial
  long trials = 0;
};

// Average emitted tokens per call over `trials` independent runs.  Trial t
// draws from RandomStream(mix_seed(seed, t)), so the estimate is independent
// of execution order and reproducible per (seed, trials).
inline McEstimate mc_block_efficiency(AlgoKind alg, const ModelPair& pair, int paths,
                                      long trials, std::uint64_t seed) {
  if (trials < 1) throw InputError("mc_block_efficiency: trials must be >= 1");
  if (paths < 1) throw InputError("mc_block_efficiency: path count must be >= 1");
  if (alg != AlgoKind::gbv && paths != 1)
    throw InputError("mc_block_efficiency: single-path algorithms require k = 1");

  multipath::NeumaierSum sum, sumsq;
  for (long t = 0; t < trials; ++t) {
    RandomStream rs(mix_seed(seed, static_cast<std::uint64_t>(t)));
    std::size_t emitted = 0;
    switch (alg) {
      case AlgoKind::ss:
        emitted = verify::ss_verify(pair, verify::sample_block(pair, rs), rs).output().size();
        break;
      case AlgoKind::bv:
        emitted = verify::bv_verify(pair, verify::sample_block(pair, rs), rs).output().size();
        break;
      case AlgoKind::gbv:
        emitted = multipath::gbv_verify(pair, multipath::sample_blocks(pair, paths, rs), rs)
                      .output()
                      .size();
        break;
    }
    double tokens = static_cast<double>(emitted);
    sum.add(tokens);
    sumsq.add(tokens * tokens);
  }

  McEstimate out;
  out.trials = trials;
  out.mean = sum.value() / static_cast<double>(trials);
  if (trials > 1) {
    double var = (sumsq.value() - static_cast<double>(trials) * out.mean * out.mean) /
                 static_cast<double>(trials - 1);
    out.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(trials));
  }
  return out;
}

// ============================================================================
// sweeps
// ============================================================================

enum class Format { csv, json };

inline const char* format_name(Format f) { return f == Format::csv ? "csv" : "json"; }

inline Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw InputError("unknown format \"" + name + "\" (expected csv or json)");
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::vector<GenFamily> families = {seqspace::dirichlet_family()};
  std::vector<int> vocab_sizes = {2};
  std::vector<int> horizons = {1};
  std::vector<int> path_counts = {1};
  std::vector<AlgoKind> algorithms = {AlgoKind::bv};
  long trials = 10'000;
  std::uint64_t cap = seqspace::kDefaultEnumerationCap;
  Format format = Format::csv;
};

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.trials < 1) throw InputError("config: trials must be >= 1");
  if (cfg.cap < 1) throw InputError("config: cap must be positive");
  if (cfg.families.empty() || cfg.vocab_sizes.empty() || cfg.horizons.empty() ||
      cfg.path_counts.empty() || cfg.algorithms.empty())
    throw InputError("config: every sweep axis needs at least one entry");
  for (int v : cfg.vocab_sizes)
    if (v < 2) throw InputError("config: vocab sizes must be >= 2");
  for (int l : cfg.horizons)
    if (l < 1) throw InputError("config: horizons must be >= 1");
  for (int k : cfg.path_counts)
    if (k < 1) throw InputError("config: path counts must be >= 1");
}

// One sweep cell: numeric columns are NaN when not computed (over cap, or the
// row failed; see `error`).
struct TrialRecord {
  std::string instance;
  std::string family;
  int vocab = 0;
  int horizon = 0;
  int paths = 0;
  std::string algorithm;
  double mc_mean = std::numeric_limits<double>::quiet_NaN();
  double mc_stderr = std::numeric_limits<double>::quiet_NaN();
  double exact = std::numeric_limits<double>::quiet_NaN();
  double single_lp = std::numeric_limits<double>::quiet_NaN();
  double multi_lp = std::numeric_limits<double>::quiet_NaN();
  long trials = 0;
  std::uint64_t seed = 0;
  std::string error;
};

// Cartesian product families x V x L x K x algorithms in declaration order.
// Row failures land in the error column; enumeration-cap misses simply leave
// the exact/LP columns empty.
inline std::vector<TrialRecord> run_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  std::vector<TrialRecord> out;
  for (std::size_t fi = 0; fi < cfg.families.size(); ++fi) {
    const GenFamily& fam = cfg.families[fi];
    for (int vocab : cfg.vocab_sizes) {
      for (int horizon : cfg.horizons) {
        std::uint64_t model_seed = mix_seed(cfg.seed, fi, static_cast<std::uint64_t>(vocab),
                                            static_cast<std::uint64_t>(horizon));
        std::string family = detail::family_label(fam);
        std::string instance =
            family + "-V" + std::to_string(vocab) + "-L" + std::to_string(horizon);
        ModelPair pair;
        std::string pair_error;
        try {
          pair = gen_model_pair(model_seed, vocab, horizon, fam);
        } catch (const std::exception& e) {
          pair_error = e.what();
        }
        for (int paths : cfg.path_counts) {
          for (AlgoKind alg : cfg.algorithms) {
            TrialRecord rec;
            rec.instance = instance;
            rec.family = family;
            rec.vocab = vocab;
            rec.horizon = horizon;
            rec.paths = paths;
            rec.algorithm = algo_name(alg);
            rec.trials = cfg.trials;
            rec.seed = model_seed;
            try {
              if (!pair_error.empty()) throw InputError(pair_error);
              McEstimate mc = mc_block_efficiency(
                  alg, pair, paths, cfg.trials,
                  mix_seed(model_seed, static_cast<std::uint64_t>(paths),
                           static_cast<std::uint64_t>(alg), 1));
              rec.mc_mean = mc.mean;
              rec.mc_stderr = mc.se;
              try {
                switch (alg) {
                  case AlgoKind::ss:
                    rec.exact = verify::exact_output_dist_single(verify::Algorithm::ss, pair,
                                                                 nullptr, cfg.cap)
                                    .expected_len();
                    break;
                  case AlgoKind::bv:
                    rec.exact = verify::bv_efficiency_analytic(pair);
                    break;
                  case AlgoKind::gbv:
                    rec.exact = lp::objective_given_skew(
                        pair, multipath::build_skewed_draft(pair, paths, cfg.cap).dist);
                    break;
                }
              } catch (const ResourceError&) {
              }
              try {
                rec.single_lp = lp::single_lp_opt(pair).value;
              } catch (const ResourceError&) {
              }
              try {
                rec.multi_lp = lp::multi_lp_opt(pair, paths, cfg.cap);
              } catch (const ResourceError&) {
              }
            } catch (const std::exception& e) {
              rec.error = e.what();
            }
            out.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return out;
}

// Per-instance direction of the exact gbv efficiency as the path count
// grows.  Instances contribute once per distinct K with an exact value;
// fewer than two points is no trend and the instance is skipped.
struct TrendRow {
  std::string instance;
  std::vector<int> path_counts;
  std::vector<double> exact;  // aligned with path_counts
  bool nondecreasing = true;  // within 1e-9 slack
};

inline std::vector<TrendRow> gbv_trend(const std::vector<TrialRecord>& records) {
  std::vector<TrendRow> rows;
  for (const TrialRecord& r : records) {
    if (r.algorithm != "gbv" || !r.error.empty() || std::isnan(r.exact)) continue;
    TrendRow* row = nullptr;
    for (TrendRow& existing : rows)
      if (existing.instance == r.instance) {
        row = &existing;
        break;
      }
    if (!row) {
      rows.push_back({r.instance, {}, {}, true});
      row = &rows.back();
    }
    row->path_counts.push_back(r.paths);
    row->exact.push_back(r.exact);
  }
  for (TrendRow& row : rows) {
    std::vector<std::size_t> order(row.path_counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return row.path_counts[a] < row.path_counts[b]; });
    std::vector<int> ks;
    std::vector<double> vals;
    for (std::size_t i : order) {
      if (!ks.empty() && ks.back() == row.path_counts[i]) continue;
      ks.push_back(row.path_counts[i]);
      vals.push_back(row.exact[i]);
    }
    row.path_counts = std::move(ks);
    row.exact = std::move(vals);
    for (std::size_t i = 0; i + 1 < row.exact.size(); ++i)
      if (row.exact[i + 1] < row.exact[i] - 1e-9) row.nondecreasing = false;
  }
  std::vector<TrendRow> out;
  for (TrendRow& row : rows)
    if (row.path_counts.size() >= 2) out.push_back(std::move(row));
  return out;
}

inline std::string trend_to_text(const std::vector<TrendRow>& rows) {
  std::string out;
  for (const TrendRow& row : rows) {
    out += row.instance + ": gbv exact over k=";
    for (std::size_t i = 0; i < row.path_counts.size(); ++i)
      out += (i ? "," : "") + std::to_string(row.path_counts[i]);
    out += " is ";
    for (std::size_t i = 0; i < row.exact.size(); ++i)
      out += (i ? ", " : "") + detail::fmt9(row.exact[i]);
    out += row.nondecreasing ? " (nondecreasing)\n" : " (not monotone up)\n";
  }
  return out;
}

// ============================================================================
// serialization
// ============================================================================

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_num(double v) { return std::isnan(v) ? std::string() : fmt9(v); }

inline std::string json_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

inline std::string json_num(double v) { return std::isnan(v) ? "null" : fmt9(v); }

}  // namespace detail

inline const char* kRecordHeader =
    "instance,family,vocab,horizon,paths,algorithm,mc_mean,mc_stderr,exact,single_lp,"
    "multi_lp,trials,seed,error";

inline std::string to_csv(const std::vector<TrialRecord>& records) {
  std::string out = std::string(kRecordHeader) + "\n";
  for (const TrialRecord& r : records) {
    out += detail::csv_field(r.instance) + "," + detail::csv_field(r.family) + "," +
           std::to_string(r.vocab) + "," + std::to_string(r.horizon) + "," +
           std::to_string(r.paths) + "," + r.algorithm + "," + detail::csv_num(r.mc_mean) + "," +
           detail::csv_num(r.mc_stderr) + "," + detail::csv_num(r.exact) + "," +
           detail::csv_num(r.single_lp) + "," + detail::csv_num(r.multi_lp) + "," +
           std::to_string(r.trials) + "," + std::to_string(r.seed) + "," +
           detail::csv_field(r.error) + "\n";
  }
  return out;
}

inline std::string to_json(const std::vector<TrialRecord>& records) {
  if (records.empty()) return "[]\n";
  std::string out = "[\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TrialRecord& r = records[i];
    out += "  {\"instance\": " + detail::json_str(r.instance) +
           ", \"family\": " + detail::json_str(r.family) +
           ", \"vocab\": " + std::to_string(r.vocab) +
           ", \"horizon\": " + std::to_string(r.horizon) +
           ", \"paths\": " + std::to_string(r.paths) +
           ", \"algorithm\": " + detail::json_str(r.algorithm) +
           ", \"mc_mean\": " + detail::json_num(r.mc_mean) +
           ", \"mc_stderr\": " + detail::json_num(r.mc_stderr) +
           ", \"exact\": " + detail::json_num(r.exact) +
           ", \"single_lp\": " + detail::json_num(r.single_lp) +
           ", \"multi_lp\": " + detail::json_num(r.multi_lp) +
           ", \"trials\": " + std::to_string(r.trials) +
           ", \"seed\": " + std::to_string(r.seed) +
           ", \"error\": " + detail::json_str(r.error) + "}";
    out += i + 1 < records.size() ? ",\n" : "\n";
  }
  return out + "]\n";
}

inline std::vector<TrialRecord> records_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("records: not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw InputError("records: expected a JSON array");
  auto num = [](const nlohmann::json& obj, const char* key) {
    const auto& v = obj.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  std::vector<TrialRecord> out;
  out.reserve(doc.size());
  for (const auto& obj : doc) {
    if (!obj.is_object()) throw InputError("records: expected an array of objects");
    TrialRecord r;
    try {
      r.instance = obj.at("instance").get<std::string>();
      r.family = obj.at("family").get<std::string>();
      r.vocab = obj.at("vocab").get<int>();
      r.horizon = obj.at("horizon").get<int>();
      r.paths = obj.at("paths").get<int>();
      r.algorithm = obj.at("algorithm").get<std::string>();
      r.mc_mean = num(obj, "mc_mean");
      r.mc_stderr = num(obj, "mc_stderr");
      r.exact = num(obj, "exact");
      r.single_lp = num(obj, "single_lp");
      r.multi_lp = num(obj, "multi_lp");
      r.trials = obj.at("trials").get<long>();
      r.seed = obj.at("seed").get<std::uint64_t>();
      r.error = obj.at("error").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("records: bad record field: ") + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void emit(const std::vector<TrialRecord>& records, Format format,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("emit: cannot open \"" + path + "\" for writing");
  out << (format == Format::csv ? to_csv(records) : to_json(records));
  out.flush();
  if (!out) throw InputError("emit: write to \"" + path + "\" failed");
}

// ============================================================================
// config files
// ============================================================================

// Same JSON container syntax as traces.  All fields optional with the
// defaults above:
//   {"seed": 7, "families": [{"kind": "dirichlet", "alpha": 1.0}],
//    "vocab_sizes": [2,3], "horizons": [1,2], "path_counts": [1,2,3],
//    "algorithms": ["bv","gbv"], "trials": 100000, "cap": 2000000,
//    "format": "csv"}
inline ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("config: expected a JSON object");

  ExperimentConfig cfg;
  try {
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("trials")) cfg.trials = doc.at("trials").get<long>();
    if (doc.contains("cap")) cfg.cap = doc.at("cap").get<std::uint64_t>();
    if (doc.contains("vocab_sizes")) cfg.vocab_sizes = doc.at("vocab_sizes").get<std::vector<int>>();
    if (doc.contains("horizons")) cfg.horizons = doc.at("horizons").get<std::vector<int>>();
    if (doc.contains("path_counts")) cfg.path_counts = doc.at("path_counts").get<std::vector<int>>();
    if (doc.contains("format")) cfg.format = parse_format(doc.at("format").get<std::string>());
    if (doc.contains("algorithms")) {
      cfg.algorithms.clear();
      for (const auto& a : doc.at("algorithms")) cfg.algorithms.push_back(parse_algo(a.get<std::string>()));
    }
    if (doc.contains("families")) {
      cfg.families.clear();
      for (const auto& f : doc.at("families")) {
        GenFamily fam;
        std::string kind = f.is_string() ? f.get<std::string>() : f.at("kind").get<std::string>();
        if (kind == "dirichlet") fam.kind = GenFamily::Kind::dirichlet;
        else if (kind == "sharpened") fam.kind = GenFamily::Kind::sharpened;
        else if (kind == "identical") fam.kind = GenFamily::Kind::identical;
        else throw InputError("config: unknown family kind \"" + kind + "\"");
        if (f.is_object()) {
          if (f.contains("alpha")) fam.alpha = f.at("alpha").get<double>();
          if (f.contains("temperature")) fam.temperature = f.at("temperature").get<double>();
        }
        cfg.families.push_back(fam);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: bad field: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("config: cannot open \"" + path + "\"");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

// ============================================================================
// invariant battery
// ============================================================================

struct CheckOutcome {
  std::string name;
  int runs = 0;
  int failures = 0;
  std::string first_failure;  // instance descriptor + detail, empty when clean
};

struct InvariantReport {
  std::vector<CheckOutcome> checks;

  bool all_passed() const {
    for (const CheckOutcome& c : checks)
      if (c.failures > 0) return false;
    return true;
  }
};

inline std::string report_to_text(const InvariantReport& report) {
  std::string out;
  for (const CheckOutcome& c : report.checks) {
    if (c.failures == 0) {
      out += "PASS " + c.name + " (" + std::to_string(c.runs) + " runs)\n";
    } else {
      out += "FAIL " + c.name + " (" + std::to_string(c.failures) + "/" +
             std::to_string(c.runs) + "): " + c.first_failure + "\n";
    }
  }
  return out;
}

inline std::string report_to_json(const InvariantReport& report) {
  if (report.checks.empty()) return "[]\n";
  std::string out = "[\n";
  for (std::size_t i = 0; i < report.checks.size(); ++i) {
    const CheckOutcome& c = report.checks[i];
    out += "  {\"check\": " + detail::json_str(c.name) + ", \"runs\": " + std::to_string(c.runs) +
           ", \"failures\": " + std::to_string(c.failures) + ", \"first_failure\": " +
           (c.failures > 0 ? detail::json_str(c.first_failure) : "null") + "}";
    out += i + 1 < report.checks.size() ? ",\n" : "\n";
  }
  return out + "]\n";
}

namespace detail {

struct CheckInstance {
  ModelPair pair;
  int paths = 1;
  std::string desc;
};

// Deterministic parameter cycling so a fixed iteration count covers the
// V x L x K x family grid.
inline CheckInstance check_instance(std::uint64_t seed, int iter, int max_horizon) {
  int vocab = 2 + iter % 2;
  int horizon = 1 + (iter / 2) % max_horizon;
  int paths = 1 + iter % 3;
  GenFamily fam;
  switch ((iter / 3) % 4) {
    case 0: fam = seqspace::dirichlet_family(1.0); break;
    case 1: fam = seqspace::dirichlet_family(0.4); break;
    case 2: fam = seqspace::sharpened_family(1.0, 0.5); break;
    default: fam = seqspace::identical_family(); break;
  }
  std::uint64_t model_seed = mix_seed(seed, static_cast<std::uint64_t>(iter), 0x5eed);
  CheckInstance inst;
  inst.pair = gen_model_pair(model_seed, vocab, horizon, fam);
  inst.paths = paths;
  inst.desc = "V=" + std::to_string(vocab) + " L=" + std::to_string(horizon) +
              " K=" + std::to_string(paths) + " family=" + family_label(fam) +
              " seed=" + std::to_string(model_seed);
  return inst;
}

inline std::optional<std::string> fail_at(const CheckInstance& inst, const std::string& what) {
  return inst.desc + ": " + what;
}

inline double dist_linf(const verify::OutputDistribution& a, const verify::OutputDistribution& b) {
  double worst = 0.0;
  for (const auto& [seq, mass] : a.probs) worst = std::max(worst, std::abs(mass - b.at(seq)));
  for (const auto& [seq, mass] : b.probs) worst = std::max(worst, std::abs(mass - a.at(seq)));
  return worst;
}

}  // namespace detail

// Runs every registered cross-module property `runs_per_check` times on
// fresh seeded instances.  Failures are data: the report carries counts and
// the first counterexample descriptor per check.
inline InvariantReport invariant_suite(std::uint64_t seed, int runs_per_check = 20) {
  if (runs_per_check < 1) throw InputError("invariant_suite: runs per check must be >= 1");
  using detail::check_instance;
  using detail::fail_at;
  using Check = std::function<std::optional<std::string>(std::uint64_t, int)>;

  std::vector<std::pair<std::string, Check>> checks;
  auto add = [&](std::string name, Check fn) { checks.emplace_back(std::move(name), std::move(fn)); };

  add("pair-tables-normalized", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 3);
    seqspace::validate_pair(inst.pair);
    for (seqspace::Side side : {seqspace::Side::target, seqspace::Side::draft}) {
      DistVec joint = seqspace::joint_dist(inst.pair, side, inst.pair.max_len(side));
      double total = 0.0;
      for (double v : joint) total += v;
      if (std::abs(total - 1.0) > 1e-9) return fail_at(inst, "joint mass " + detail::fmt9(total));
    }
    return std::nullopt;
  });

  add("antichain-enumeration-consistent", [](std::uint64_t, int it) -> std::optional<std::string> {
    int vocab = 2 + it % 2;
    int depth = 1 + (it / 2) % (vocab == 2 ? 3 : 2);
    auto all = seqspace::enumerate_antichains(vocab, depth);
    if (all.size() != seqspace::antichain_count(vocab, depth))
      return "V=" + std::to_string(vocab) + " depth=" + std::to_string(depth) +
             ": enumeration size disagrees with the count recurrence";
    return std::nullopt;
  });

  add("residuals-normalized", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 3);
    RandomStream rs(mix_seed(s, static_cast<std::uint64_t>(it), 1));
    TokenSeq block = verify::sample_block(inst.pair, rs);
    verify::BlockViews v = verify::make_block_views(inst.pair, block);
    for (int i = 0; i + 1 <= inst.pair.horizon; ++i) {
      auto res = verify::token_residual(v.p[i], v.q[i]);
      if (!res) continue;
      double total = 0.0;
      for (double x : *res) {
        if (x < 0.0) return fail_at(inst, "negative residual entry");
        total += x;
      }
      if (std::abs(total - 1.0) > 1e-12) return fail_at(inst, "residual mass " + detail::fmt9(total));
    }
    return std::nullopt;
  });

  add("schedule-ranges", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 3);
    RandomStream rs(mix_seed(s, static_cast<std::uint64_t>(it), 2));
    verify::BvSchedule sched =
        verify::bv_schedule(verify::make_block_views(inst.pair, verify::sample_block(inst.pair, rs)));
    if (sched.w[0] != 1.0) return fail_at(inst, "root weight not 1");
    for (double w : sched.w)
      if (w < 0.0 || w > 1.0 + 1e-12) return fail_at(inst, "weight outside [0,1]");
    for (double h : sched.h)
      if (h < -1e-12 || h > 1.0 + 1e-12) return fail_at(inst, "acceptance outside [0,1]");
    for (double r : sched.r)
      if (r < -1e-12) return fail_at(inst, "negative residual mass");
    return std::nullopt;
  });

  add("ss-target-matching", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto dist = verify::exact_output_dist_single(verify::Algorithm::ss, inst.pair);
    lp::CheckResult c = lp::target_match_check(dist, inst.pair);
    if (!c.ok) return fail_at(inst, c.detail);
    return std::nullopt;
  });

  add("bv-target-matching", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto dist = verify::exact_output_dist_single(verify::Algorithm::bv, inst.pair);
    lp::CheckResult c = lp::target_match_check(dist, inst.pair);
    if (!c.ok) return fail_at(inst, c.detail);
    return std::nullopt;
  });

  add("bv-attains-single-lp", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 3);
    double eff = verify::bv_efficiency_analytic(inst.pair);
    double opt = lp::single_lp_opt(inst.pair).value;
    if (std::abs(eff - opt) > 1e-9)
      return fail_at(inst, "efficiency " + detail::fmt9(eff) + " vs optimum " + detail::fmt9(opt));
    return std::nullopt;
  });

  add("ss-below-single-lp", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    double ss = verify::exact_output_dist_single(verify::Algorithm::ss, inst.pair).expected_len();
    double opt = lp::single_lp_opt(inst.pair).value;
    if (ss > opt + 1e-9)
      return fail_at(inst, "ss " + detail::fmt9(ss) + " above optimum " + detail::fmt9(opt));
    return std::nullopt;
  });

  add("skewed-mass-bruteforce", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    seqspace::TreeShape tree = inst.pair.ctx_tree();
    std::map<TokenSeq, double> brute = multipath::selection_dist_bruteforce(inst.pair, inst.paths);
    for (std::int64_t rk = 0; rk < tree.level_count(inst.pair.horizon); ++rk) {
      TokenSeq seq = tree.seq_at(inst.pair.horizon, rk);
      double closed = multipath::skewed_mass(inst.pair, seq, inst.paths);
      auto hit = brute.find(seq);
      double bf = hit == brute.end() ? 0.0 : hit->second;
      if (std::abs(closed - bf) > 1e-9)
        return fail_at(inst, "path \"" + seqspace::context_key(seq) + "\": closed form " +
                                 detail::fmt9(closed) + " vs brute force " + detail::fmt9(bf));
    }
    return std::nullopt;
  });

  add("skewed-mass-polymatroid", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    seqspace::TreeShape tree = inst.pair.ctx_tree();
    std::vector<TokenSeq> ordering;
    for (std::int64_t rk = 0; rk < tree.level_count(inst.pair.horizon); ++rk)
      ordering.push_back(tree.seq_at(inst.pair.horizon, rk));
    std::sort(ordering.begin(), ordering.end(), [&](const TokenSeq& a, const TokenSeq& b) {
      return multipath::tuple_less(multipath::ratio_tuple(inst.pair, a),
                                   multipath::ratio_tuple(inst.pair, b));
    });
    auto masses = lp::polymatroid_qgamma(ordering, inst.pair, inst.paths);
    for (const auto& [seq, mass] : masses)
      if (std::abs(mass - multipath::skewed_mass(inst.pair, seq, inst.paths)) > 1e-9)
        return fail_at(inst, "vertex mass disagrees at " + seqspace::context_key(seq));
    return std::nullopt;
  });

  add("skewed-draft-feasible", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    multipath::SkewedDraft skew = multipath::build_skewed_draft(inst.pair, inst.paths);
    seqspace::TreeShape tree = inst.pair.ctx_tree();
    DistVec leaf(skew.dist.mass.begin() + tree.level_begin(inst.pair.horizon),
                 skew.dist.mass.end());
    lp::CheckResult c = lp::skew_feasible(leaf, inst.pair, inst.paths);
    if (!c.ok) return fail_at(inst, c.detail);
    return std::nullopt;
  });

  add("gbv-target-matching", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto dist = multipath::exact_output_dist_multi(inst.pair, inst.paths);
    lp::CheckResult c = lp::target_match_check(dist, inst.pair);
    if (!c.ok) return fail_at(inst, c.detail);
    return std::nullopt;
  });

  add("gbv-prefix-matching", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto dist = multipath::exact_output_dist_multi(inst.pair, inst.paths);
    lp::CheckResult c = lp::prefix_match_check(dist, inst.pair, inst.paths);
    if (!c.ok) return fail_at(inst, c.detail);
    return std::nullopt;
  });

  add("gbv-k1-reduction", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto multi = multipath::exact_output_dist_multi(inst.pair, 1);
    auto single = verify::exact_output_dist_single(verify::Algorithm::bv, inst.pair);
    double gap = detail::dist_linf(multi, single);
    if (gap > 1e-12) return fail_at(inst, "output distributions differ by " + detail::fmt9(gap));
    return std::nullopt;
  });

  add("gbv-below-multi-lp", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    if (inst.pair.vocab > 2 && inst.pair.horizon > 1) return std::nullopt;  // keep the LP small
    double eff = lp::objective_given_skew(
        inst.pair, multipath::build_skewed_draft(inst.pair, inst.paths).dist);
    double bound = lp::multi_lp_opt(inst.pair, inst.paths);
    if (eff > bound + 1e-7)
      return fail_at(inst, "efficiency " + detail::fmt9(eff) + " above bound " + detail::fmt9(bound));
    return std::nullopt;
  });

  add("multi-lp-nesting", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    if (inst.pair.vocab > 2 && inst.pair.horizon > 1) return std::nullopt;
    double single = lp::single_lp_opt(inst.pair).value;
    double prev = 0.0;
    for (int k = 1; k <= 3; ++k) {
      double opt = lp::multi_lp_opt(inst.pair, k);
      if (k == 1 && std::abs(opt - single) > 1e-7)
        return fail_at(inst, "k=1 optimum " + detail::fmt9(opt) + " vs single " + detail::fmt9(single));
      if (opt < prev - 1e-7) return fail_at(inst, "optimum decreasing in k");
      prev = opt;
    }
    return std::nullopt;
  });

  add("budget-identity", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    auto dist = verify::exact_output_dist_single(verify::Algorithm::bv, inst.pair);
    lp::NodeBudgets b = lp::budgets_from_output(dist, inst.pair);
    seqspace::TreeShape tree = inst.pair.out_tree();
    DistVec pmass = seqspace::path_prob_table(inst.pair, seqspace::Side::target,
                                              inst.pair.horizon + 1);
    DistVec qmass = seqspace::path_prob_table(inst.pair, seqspace::Side::draft,
                                              inst.pair.horizon);
    seqspace::TreeShape ctx = inst.pair.ctx_tree();
    for (std::int64_t rk = 0; rk < ctx.level_count(inst.pair.horizon); ++rk) {
      TokenSeq block = ctx.seq_at(inst.pair.horizon, rk);
      verify::BvSchedule sched = verify::bv_schedule(verify::make_block_views(inst.pair, block));
      for (int i = 1; i <= inst.pair.horizon; ++i) {
        TokenSeq prefix(block.begin(), block.begin() + i);
        std::int64_t node = tree.id_of_seq(prefix);
        if (std::abs(b.values[node] * pmass[node] - sched.w[i] * qmass[node]) > 1e-9)
          return fail_at(inst, "budget identity broken at \"" + seqspace::context_key(prefix) + "\"");
      }
    }
    return std::nullopt;
  });

  add("budgets-feasible", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    for (verify::Algorithm alg : {verify::Algorithm::ss, verify::Algorithm::bv}) {
      auto dist = verify::exact_output_dist_single(alg, inst.pair);
      lp::CheckResult c = lp::single_lp_check(lp::budgets_from_output(dist, inst.pair), inst.pair);
      if (!c.ok) return fail_at(inst, c.detail);
    }
    return std::nullopt;
  });

  add("transport-hall-agreement", [](std::uint64_t s, int it) -> std::optional<std::string> {
    RandomStream rs(mix_seed(s, static_cast<std::uint64_t>(it), 3));
    int na = 1 + static_cast<int>(rs.uniform() * 8);
    int nb = 1 + static_cast<int>(rs.uniform() * 8);
    lp::TransportInstance inst;
    auto fill = [&](int n) {
      DistVec v(static_cast<std::size_t>(n));
      double total = 0.0;
      for (double& x : v) {
        x = -std::log(1.0 - rs.uniform());
        total += x;
      }
      for (double& x : v) x /= total;
      return v;
    };
    inst.supply = fill(na);
    inst.demand = fill(nb);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j)
        if (rs.uniform() < 0.45) inst.edges.emplace_back(i, j);

    // Hall condition by direct subset enumeration
    std::vector<unsigned> nbr(static_cast<std::size_t>(na), 0u);
    for (auto [i, j] : inst.edges) nbr[i] |= 1u << j;
    double deficiency = -1.0;
    for (unsigned sub = 1; sub < (1u << na); ++sub) {
      double a = 0.0;
      unsigned cover = 0;
      for (int i = 0; i < na; ++i)
        if (sub & (1u << i)) {
          a += inst.supply[i];
          cover |= nbr[i];
        }
      double bmass = 0.0;
      for (int j = 0; j < nb; ++j)
        if (cover & (1u << j)) bmass += inst.demand[j];
      deficiency = std::max(deficiency, a - bmass);
    }
    if (deficiency > 0.0 && deficiency <= 1e-7) return std::nullopt;  // boundary dust
    lp::TransportResult res = lp::transport_feasible(inst);
    if (res.feasible != (deficiency <= 0.0))
      return "transport instance |A|=" + std::to_string(na) + " |B|=" + std::to_string(nb) +
             " seed=" + std::to_string(s) + " iter=" + std::to_string(it) +
             ": flow and Hall condition disagree";
    return std::nullopt;
  });

  add("objective-consistency", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    multipath::SkewedDraft skew = multipath::build_skewed_draft(inst.pair, inst.paths);
    double obj = lp::objective_given_skew(inst.pair, skew.dist);
    double analytic = verify::bv_efficiency_analytic(inst.pair, skew.dist);
    if (std::abs(obj - analytic) > 1e-9)
      return fail_at(inst, "objective " + detail::fmt9(obj) + " vs analytic " + detail::fmt9(analytic));
    if (lp::skew_lower_bound(inst.pair, skew.dist) > obj + 1e-12)
      return fail_at(inst, "ratio floor above the objective");
    return std::nullopt;
  });

  add("mc-within-band", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    AlgoKind alg = static_cast<AlgoKind>(it % 3);
    int paths = alg == AlgoKind::gbv ? inst.paths : 1;
    double exact = 0.0;
    switch (alg) {
      case AlgoKind::ss:
        exact = verify::exact_output_dist_single(verify::Algorithm::ss, inst.pair).expected_len();
        break;
      case AlgoKind::bv:
        exact = verify::bv_efficiency_analytic(inst.pair);
        break;
      case AlgoKind::gbv:
        exact = lp::objective_given_skew(inst.pair,
                                         multipath::build_skewed_draft(inst.pair, paths).dist);
        break;
    }
    McEstimate mc = mc_block_efficiency(alg, inst.pair, paths, 4000,
                                        mix_seed(s, static_cast<std::uint64_t>(it), 4));
    if (std::abs(mc.mean - exact) > 4.0 * mc.se + 1e-6)
      return fail_at(inst, std::string(algo_name(alg)) + " mean " + detail::fmt9(mc.mean) +
                               " vs exact " + detail::fmt9(exact) + " (se " + detail::fmt9(mc.se) + ")");
    return std::nullopt;
  });

  add("mc-replay-determinism", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 2);
    std::uint64_t mc_seed = mix_seed(s, static_cast<std::uint64_t>(it), 5);
    McEstimate a = mc_block_efficiency(AlgoKind::gbv, inst.pair, inst.paths, 500, mc_seed);
    McEstimate b = mc_block_efficiency(AlgoKind::gbv, inst.pair, inst.paths, 500, mc_seed);
    if (a.mean != b.mean || a.se != b.se) return fail_at(inst, "replay diverged");
    return std::nullopt;
  });

  add("trace-round-trip", [](std::uint64_t s, int it) -> std::optional<std::string> {
    auto inst = check_instance(s, it, 3);
    ModelPair back = trace_io::parse_trace(trace_io::trace_to_string(inst.pair));
    if (back.vocab != inst.pair.vocab || back.horizon != inst.pair.horizon)
      return fail_at(inst, "trace round trip changed the shape");
    for (std::size_t i = 0; i < inst.pair.p.size(); ++i)
      if (std::abs(back.p[i] - inst.pair.p[i]) > 1e-12 ||
          std::abs(back.q[i] - inst.pair.q[i]) > 1e-12)
        return fail_at(inst, "trace round trip moved a probability");
    return std::nullopt;
  });

  add("records-round-trip", [](std::uint64_t s, int it) -> std::optional<std::string> {
    RandomStream rs(mix_seed(s, static_cast<std::uint64_t>(it), 6));
    std::vector<TrialRecord> recs(2);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      recs[i].instance = "inst-" + std::to_string(i);
      recs[i].family = "dirichlet(alpha=1)";
      recs[i].vocab = 2;
      recs[i].horizon = 1 + static_cast<int>(i);
      recs[i].paths = 1;
      recs[i].algorithm = "bv";
      recs[i].mc_mean = 1.0 + rs.uniform();
      recs[i].mc_stderr = rs.uniform() / 100.0;
      recs[i].exact = i == 0 ? 1.0 + rs.uniform() : std::numeric_limits<double>::quiet_NaN();
      recs[i].single_lp = 1.0 + rs.uniform();
      recs[i].multi_lp = 1.0 + rs.uniform();
      recs[i].trials = 100;
      recs[i].seed = mix_seed(s, i);
      recs[i].error = i == 1 ? "err, \"quoted\"" : "";
    }
    std::string json = to_json(recs);
    if (to_json(records_from_json(json)) != json) return std::string("json round trip not a fixpoint");
    return std::nullopt;
  });

  InvariantReport report;
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    CheckOutcome outcome;
    outcome.name = checks[ci].first;
    std::uint64_t check_seed = mix_seed(seed, ci, 0xC4EC);
    for (int it = 0; it < runs_per_check; ++it) {
      ++outcome.runs;
      std::optional<std::string> fail;
      try {
        fail = checks[ci].second(check_seed, it);
      } catch (const std::exception& e) {
        fail = std::string("unexpected exception: ") + e.what();
      }
      if (fail) {
        if (outcome.failures == 0) outcome.first_failure = *fail;
        ++outcome.failures;
      }
    }
    report.checks.push_back(std::move(outcome));
  }
  return report;
}

}  // namespace specverify::harness
