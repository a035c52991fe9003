#pragma once

// Optimality bounds and validity certificates for block verifiers.
//
// The acceptance budgets D(prefix) of a verifier form a feasible point of a
// small linear program over the prefix tree; the optimum of that program is
// the best reachable block efficiency.  This header computes budgets from an
// exact output distribution, checks feasibility certificates, solves the
// single-path program in closed form and the multi-path relaxation via
// simplex, and provides the transport / prefix-matching / target-matching
// checkers used to certify sampler outputs.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specverify/errors.hpp"
#include "specverify/maxflow.hpp"
#include "specverify/seqspace.hpp"
#include "specverify/simplex.hpp"
#include "specverify/verify_multi.hpp"
#include "specverify/verify_single.hpp"

namespace specverify::lp {

using seqspace::context_key;
using seqspace::kDefaultEnumerationCap;
using seqspace::ModelPair;
using seqspace::PrefixDist;
using seqspace::Side;
using seqspace::Token;
using seqspace::TokenSeq;
using seqspace::TreeShape;

inline constexpr double kCertTol = 1e-9;

namespace detail {

// 1 - (1 - s)^k in a cancellation-free form: s * sum_{j<k} (1-s)^j.
inline double psi_mass(double s, int k) {
  return s * multipath::detail::powsum(1.0, 1.0 - s, k);
}

inline std::string antichain_label(const TreeShape& tree, const std::vector<std::int64_t>& ids) {
  std::string out = "{";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ", ";
    out += "\"" + context_key(tree.seq_at(tree.level_of(ids[i]), tree.rank_of(ids[i]))) + "\"";
  }
  return out + "}";
}

}  // namespace detail

// ============================================================================
// acceptance budgets
// ============================================================================

// D(prefix) for every prefix of length 0..L+1, node-id indexed over the
// output tree.  For a verifier, D(a_{1:i}) is the probability the output
// strictly extends a_{1:i}, conditioned on the target path and divided by its
// probability; D(empty) = 1 and D is nonincreasing along every path.
struct NodeBudgets {
  int vocab = 0;
  int horizon = 0;
  DistVec values;

  TreeShape tree() const { return TreeShape(vocab, horizon + 1); }
  double at(const TokenSeq& prefix) const { return values[tree().id_of_seq(prefix)]; }
};

inline NodeBudgets budgets_from_output(const verify::OutputDistribution& dist,
                                       const ModelPair& pair) {
  TreeShape tree = pair.out_tree();
  if (tree.total_nodes() > static_cast<std::int64_t>(kDefaultEnumerationCap))
    throw ResourceError("budgets_from_output: output tree exceeds enumeration cap");
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon + 1);

  DistVec r(static_cast<std::size_t>(tree.total_nodes()), 0.0);
  for (const auto& [seq, mass] : dist.probs) {
    if (seq.empty() || static_cast<int>(seq.size()) > pair.horizon + 1)
      throw InputError("budgets_from_output: output length outside 1..L+1");
    r[tree.id_of_seq(seq)] += mass;
  }

  NodeBudgets out{pair.vocab, pair.horizon,
                  DistVec(static_cast<std::size_t>(tree.total_nodes()), 0.0)};
  out.values[0] = 1.0;
  for (int lv = 1; lv <= pair.horizon + 1; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      std::int64_t parent = tree.id(lv - 1, tree.parent_rank(rk));
      if (pmass[node] > 0.0) {
        out.values[node] = out.values[parent] - r[node] / pmass[node];
      } else if (r[node] > kCertTol) {
        throw InputError("budgets_from_output: output mass on zero-probability path \"" +
                         context_key(tree.seq_at(lv, rk)) + "\"");
      } else {
        out.values[node] = out.values[parent];
      }
    }
  }
  return out;
}

// ============================================================================
// certificates
// ============================================================================

struct CheckResult {
  bool ok = true;
  std::string detail;

  static CheckResult pass() { return {}; }
  static CheckResult fail(std::string why) { return {false, std::move(why)}; }
  explicit operator bool() const { return ok; }
};

// Feasibility of budgets for the single-path program: D(empty) = 1, chain
// nonincreasing and nonnegative down to length L+1, and D*p <= q pointwise on
// lengths 0..L.  Names the first violated prefix in level order.
inline CheckResult single_lp_check(const NodeBudgets& budgets, const ModelPair& pair) {
  if (budgets.vocab != pair.vocab || budgets.horizon != pair.horizon)
    throw InputError("single_lp_check: budget shape does not match the pair");
  TreeShape tree = pair.out_tree();
  // level <= L node ids agree between the depth-L and depth-L+1 trees, so one
  // id space serves both tables
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon + 1);
  DistVec qmass = seqspace::path_prob_table(pair, Side::draft, pair.horizon);

  const DistVec& d = budgets.values;
  if (std::abs(d[0] - 1.0) > kCertTol)
    return CheckResult::fail("root budget must equal 1, got " + std::to_string(d[0]));
  for (int lv = 0; lv <= pair.horizon + 1; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      if (lv > 0) {
        std::int64_t parent = tree.id(lv - 1, tree.parent_rank(rk));
        if (d[node] > d[parent] + kCertTol)
          return CheckResult::fail("chain violated at prefix \"" +
                                   context_key(tree.seq_at(lv, rk)) + "\"");
      }
      if (d[node] < -kCertTol)
        return CheckResult::fail("negative budget at prefix \"" +
                                 context_key(tree.seq_at(lv, rk)) + "\"");
      if (lv <= pair.horizon && d[node] * pmass[node] > qmass[node] + kCertTol)
        return CheckResult::fail("draft bound violated at prefix \"" +
                                 context_key(tree.seq_at(lv, rk)) + "\"");
    }
  }
  return CheckResult::pass();
}

// ============================================================================
// single-path optimum
// ============================================================================

struct SingleLpSolution {
  double value = 0.0;
  NodeBudgets budgets;
};

// Closed-form optimum of the single-path program.  t(prefix) = min(q(prefix),
// t(parent) * p(token|parent)) is the tight value of D*p, and the objective
// is its sum over lengths 0..L; no division happens until budgets are read
// back out.
inline SingleLpSolution single_lp_opt(const ModelPair& pair) {
  TreeShape ctx = pair.ctx_tree();
  TreeShape out_tree = pair.out_tree();
  if (out_tree.total_nodes() > static_cast<std::int64_t>(kDefaultEnumerationCap))
    throw ResourceError("single_lp_opt: tree exceeds enumeration cap");
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon);
  DistVec qmass = seqspace::path_prob_table(pair, Side::draft, pair.horizon);

  DistVec t(static_cast<std::size_t>(ctx.total_nodes()), 0.0);
  t[0] = 1.0;
  multipath::NeumaierSum value;
  value.add(1.0);
  for (int lv = 0; lv < pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < ctx.level_count(lv); ++rk) {
      std::int64_t node = ctx.id(lv, rk);
      const double* prow = pair.p_row(node);
      for (Token x = 0; x < pair.vocab; ++x) {
        std::int64_t child = ctx.id(lv + 1, ctx.child_rank(rk, x));
        t[child] = std::min(qmass[child], t[node] * prow[x]);
        value.add(t[child]);
      }
    }
  }

  SingleLpSolution out;
  out.value = value.value();
  out.budgets = {pair.vocab, pair.horizon,
                 DistVec(static_cast<std::size_t>(out_tree.total_nodes()), 0.0)};
  out.budgets.values[0] = 1.0;
  for (int lv = 1; lv <= pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < out_tree.level_count(lv); ++rk) {
      std::int64_t node = out_tree.id(lv, rk);
      std::int64_t parent = out_tree.id(lv - 1, out_tree.parent_rank(rk));
      out.budgets.values[node] =
          pmass[node] > 0.0 ? t[node] / pmass[node] : out.budgets.values[parent];
    }
  }
  return out;
}

// ============================================================================
// multi-path relaxation
// ============================================================================

// Budget program for K drafted paths: variables D(prefix) over lengths 0..L
// in [0,1] with D(empty) pinned to 1, chain rows D(child) <= D(parent), and
// one row per antichain T (root-only and empty excluded, their rows being
// vacuous): sum_T D*p <= 1 - (1 - sum_T q)^K.  Objective: sum of D*p.
inline LinearProgram multi_lp_build(const ModelPair& pair, int paths,
                                    std::uint64_t cap = kDefaultEnumerationCap) {
  if (paths < 1) throw InputError("multi_lp_build: path count must be >= 1");
  TreeShape tree = pair.ctx_tree();
  if (seqspace::antichain_count(pair.vocab, pair.horizon, cap + 1) > cap)
    throw ResourceError("multi_lp_build: antichain count exceeds cap " + std::to_string(cap));
  const std::int64_t n = tree.total_nodes();
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon);
  DistVec qmass = seqspace::path_prob_table(pair, Side::draft, pair.horizon);

  LinearProgram lp;
  lp.objective = pmass;
  lp.lower.assign(static_cast<std::size_t>(n), 0.0);
  lp.upper.assign(static_cast<std::size_t>(n), 1.0);
  lp.lower[0] = 1.0;
  lp.var_labels.reserve(static_cast<std::size_t>(n));
  for (int lv = 0; lv <= pair.horizon; ++lv)
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk)
      lp.var_labels.push_back("\"" + context_key(tree.seq_at(lv, rk)) + "\"");

  for (int lv = 1; lv <= pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      std::int64_t parent = tree.id(lv - 1, tree.parent_rank(rk));
      DistVec row(static_cast<std::size_t>(n), 0.0);
      row[node] = 1.0;
      row[parent] = -1.0;
      lp.add_row(std::move(row), 0.0, "chain " + lp.var_labels[node]);
    }
  }

  seqspace::for_each_antichain(pair.vocab, pair.horizon, [&](const std::vector<std::int64_t>& ids) {
    if (ids.empty() || (ids.size() == 1 && ids[0] == 0)) return;
    DistVec row(static_cast<std::size_t>(n), 0.0);
    double s = 0.0;
    for (std::int64_t node : ids) {
      row[node] = pmass[node];
      s += qmass[node];
    }
    lp.add_row(std::move(row), detail::psi_mass(s, paths),
               "antichain " + detail::antichain_label(tree, ids));
  });

  if (lp.rows.size() > cap)
    throw ResourceError("multi_lp_build: row count exceeds cap " + std::to_string(cap));
  return lp;
}

inline double multi_lp_opt(const ModelPair& pair, int paths,
                           std::uint64_t cap = kDefaultEnumerationCap) {
  SimplexResult res = simplex_solve(multi_lp_build(pair, paths, cap));
  if (res.status != SolveStatus::optimal)
    throw InternalError(std::string("multi_lp_opt: solver returned ") + status_name(res.status));
  return res.value;
}

// ============================================================================
// skew certificates
// ============================================================================

// Whether leaf masses r over the length-L paths can be realized by selecting
// the best of K drafted paths: every antichain T must satisfy
// sum_T r <= 1 - (1 - sum_T q)^K, r lifted to prefixes by summation.
inline CheckResult skew_feasible(const DistVec& leaf_mass, const ModelPair& pair, int paths,
                                 std::uint64_t cap = kDefaultEnumerationCap) {
  if (paths < 1) throw InputError("skew_feasible: path count must be >= 1");
  TreeShape tree = pair.ctx_tree();
  if (static_cast<std::int64_t>(leaf_mass.size()) != tree.level_count(pair.horizon))
    throw InputError("skew_feasible: need one mass per length-L path");
  double total = 0.0;
  for (double v : leaf_mass) {
    if (v < -kCertTol) throw InputError("skew_feasible: negative leaf mass");
    total += v;
  }
  if (std::abs(total - 1.0) > kCertTol)
    throw InputError("skew_feasible: leaf masses must form a distribution");
  if (seqspace::antichain_count(pair.vocab, pair.horizon, cap + 1) > cap)
    throw ResourceError("skew_feasible: antichain count exceeds cap " + std::to_string(cap));

  PrefixDist r = PrefixDist::from_leaf_masses(pair.vocab, pair.horizon, leaf_mass);
  DistVec qmass = seqspace::path_prob_table(pair, Side::draft, pair.horizon);

  CheckResult out = CheckResult::pass();
  seqspace::for_each_antichain(pair.vocab, pair.horizon, [&](const std::vector<std::int64_t>& ids) {
    if (!out.ok || ids.empty()) return;
    double lhs = 0.0, s = 0.0;
    for (std::int64_t node : ids) {
      lhs += r.mass[node];
      s += qmass[node];
    }
    if (lhs > detail::psi_mass(s, paths) + kCertTol)
      out = CheckResult::fail("selection bound violated at antichain " +
                              detail::antichain_label(tree, ids));
  });
  return out;
}

// Block efficiency of the weighted verifier when the draft side is replaced
// by an arbitrary prefix distribution: sum over prefixes of
// min_{0<=k<=i} p(a_{k+1:i} | a_{1:k}) * skew(a_{1:k}), via the recursion
// m(child) = min(m(parent) * p(token|parent), skew(child)).
inline double objective_given_skew(const ModelPair& pair, const PrefixDist& skew) {
  if (skew.vocab != pair.vocab || skew.len != pair.horizon)
    throw InputError("objective_given_skew: skew shape does not match the pair");
  TreeShape tree = pair.ctx_tree();
  DistVec m(static_cast<std::size_t>(tree.total_nodes()), 0.0);
  m[0] = skew.mass[0];
  multipath::NeumaierSum value;
  value.add(m[0]);
  for (int lv = 0; lv < pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      const double* prow = pair.p_row(node);
      for (Token x = 0; x < pair.vocab; ++x) {
        std::int64_t child = tree.id(lv + 1, tree.child_rank(rk, x));
        m[child] = std::min(m[node] * prow[x], skew.mass[child]);
        value.add(m[child]);
      }
    }
  }
  return value.value();
}

// (L+1) * min over prefixes of skew/p; a coarse floor on the efficiency a
// skew can deliver.  Every target prefix must have positive probability.
inline double skew_lower_bound(const ModelPair& pair, const PrefixDist& skew) {
  if (skew.vocab != pair.vocab || skew.len != pair.horizon)
    throw InputError("skew_lower_bound: skew shape does not match the pair");
  TreeShape tree = pair.ctx_tree();
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon);
  double worst = 1.0;
  for (int lv = 0; lv <= pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      if (!(pmass[node] > 0.0))
        throw InputError("skew_lower_bound: zero-probability prefix \"" +
                         context_key(tree.seq_at(lv, rk)) + "\" outside domain");
      worst = std::min(worst, skew.mass[node] / pmass[node]);
    }
  }
  return (pair.horizon + 1) * worst;
}

// ============================================================================
// transport feasibility
// ============================================================================

// Can supply be routed to demand along the given admissible edges?  Both
// sides must be distributions; feasibility is max-flow value 1.
struct TransportInstance {
  DistVec supply;
  DistVec demand;
  std::vector<std::pair<int, int>> edges;  // (supply index, demand index)
};

struct TransportResult {
  bool feasible = true;
  double flow = 0.0;
  std::vector<int> violating;  // supply indices whose neighborhoods are short
};

inline TransportResult transport_feasible(const TransportInstance& inst) {
  const int na = static_cast<int>(inst.supply.size());
  const int nb = static_cast<int>(inst.demand.size());
  if (na < 1 || nb < 1) throw InputError("transport_feasible: empty side");
  auto check_dist = [](const DistVec& v, const char* side) {
    double total = 0.0;
    for (double x : v) {
      if (x < -kCertTol) throw InputError(std::string("transport_feasible: negative ") + side);
      total += x;
    }
    if (std::abs(total - 1.0) > kCertTol)
      throw InputError(std::string("transport_feasible: ") + side + " must sum to 1");
  };
  check_dist(inst.supply, "supply");
  check_dist(inst.demand, "demand");

  const int source = 0, sink = na + nb + 1;
  flow::MaxFlow net(na + nb + 2);
  for (int i = 0; i < na; ++i) net.add_edge(source, 1 + i, std::max(inst.supply[i], 0.0));
  for (int j = 0; j < nb; ++j) net.add_edge(1 + na + j, sink, std::max(inst.demand[j], 0.0));
  for (auto [i, j] : inst.edges) {
    if (i < 0 || i >= na || j < 0 || j >= nb)
      throw InputError("transport_feasible: edge endpoint out of range");
    net.add_edge(1 + i, 1 + na + j, 1.0);
  }

  TransportResult out;
  out.flow = net.run(source, sink);
  out.feasible = out.flow >= 1.0 - kCertTol;
  if (!out.feasible) {
    std::vector<bool> seen = net.reachable();
    for (int i = 0; i < na; ++i)
      if (seen[1 + i]) out.violating.push_back(i);
  }
  return out;
}

// ============================================================================
// output certificates
// ============================================================================

// Prefix-matching: for every antichain T of the depth-L tree, the probability
// mass of outputs strictly extending members of T stays within what K drafted
// paths can cover: sum_T ext <= 1 - (1 - sum_T q)^K.
inline CheckResult prefix_match_check(const verify::OutputDistribution& dist,
                                      const ModelPair& pair, int paths,
                                      std::uint64_t cap = kDefaultEnumerationCap) {
  if (paths < 1) throw InputError("prefix_match_check: path count must be >= 1");
  TreeShape out_tree = pair.out_tree();
  if (out_tree.total_nodes() > static_cast<std::int64_t>(kDefaultEnumerationCap))
    throw ResourceError("prefix_match_check: output tree exceeds enumeration cap");
  if (seqspace::antichain_count(pair.vocab, pair.horizon, cap + 1) > cap)
    throw ResourceError("prefix_match_check: antichain count exceeds cap " + std::to_string(cap));

  DistVec sub(static_cast<std::size_t>(out_tree.total_nodes()), 0.0);
  for (const auto& [seq, mass] : dist.probs) {
    if (seq.empty() || static_cast<int>(seq.size()) > pair.horizon + 1)
      throw InputError("prefix_match_check: output length outside 1..L+1");
    sub[out_tree.id_of_seq(seq)] += mass;
  }
  DistVec own = sub;  // mass on exactly this sequence
  for (int lv = pair.horizon + 1; lv >= 1; --lv) {
    for (std::int64_t rk = 0; rk < out_tree.level_count(lv); ++rk) {
      std::int64_t node = out_tree.id(lv, rk);
      sub[out_tree.id(lv - 1, out_tree.parent_rank(rk))] += sub[node];
    }
  }

  TreeShape ctx = pair.ctx_tree();
  DistVec qmass = seqspace::path_prob_table(pair, Side::draft, pair.horizon);
  CheckResult out = CheckResult::pass();
  seqspace::for_each_antichain(pair.vocab, pair.horizon, [&](const std::vector<std::int64_t>& ids) {
    if (!out.ok || ids.empty()) return;
    double lhs = 0.0, s = 0.0;
    for (std::int64_t node : ids) {
      lhs += sub[node] - own[node];  // strict extensions only
      s += qmass[node];
    }
    if (lhs > detail::psi_mass(s, paths) + kCertTol)
      out = CheckResult::fail("prefix matching violated at antichain " +
                              detail::antichain_label(ctx, ids));
  });
  return out;
}

// Target-matching: along every positive-probability target path a_{1:L+1},
// the output masses must satisfy sum_i R(a_{1:i+1}) / p(a_{1:i+1}) = 1.
inline CheckResult target_match_check(const verify::OutputDistribution& dist,
                                      const ModelPair& pair) {
  TreeShape tree = pair.out_tree();
  if (tree.total_nodes() > static_cast<std::int64_t>(kDefaultEnumerationCap))
    throw ResourceError("target_match_check: output tree exceeds enumeration cap");
  DistVec pmass = seqspace::path_prob_table(pair, Side::target, pair.horizon + 1);
  DistVec r(static_cast<std::size_t>(tree.total_nodes()), 0.0);
  for (const auto& [seq, mass] : dist.probs) {
    if (seq.empty() || static_cast<int>(seq.size()) > pair.horizon + 1)
      throw InputError("target_match_check: output length outside 1..L+1");
    r[tree.id_of_seq(seq)] += mass;
  }

  CheckResult out = CheckResult::pass();
  auto walk = [&](auto&& self, int lv, std::int64_t rk, double acc) -> bool {
    if (lv == pair.horizon + 1) {
      if (std::abs(acc - 1.0) > kCertTol) {
        out = CheckResult::fail("target matching violated on path \"" +
                                context_key(tree.seq_at(lv, rk)) + "\"");
        return false;
      }
      return true;
    }
    for (Token x = 0; x < pair.vocab; ++x) {
      std::int64_t crk = tree.child_rank(rk, x);
      std::int64_t child = tree.id(lv + 1, crk);
      if (!(pmass[child] > 0.0)) continue;
      if (!self(self, lv + 1, crk, acc + r[child] / pmass[child])) return false;
    }
    return true;
  };
  walk(walk, 0, 0, 0.0);
  return out;
}

// ============================================================================
// polymatroid vertex
// ============================================================================

// Greedy vertex of the selection polymatroid for a path ordering given lowest
// rank first: consuming paths in rank order, each receives
// (A + q)^K - A^K with A the draft mass already consumed.  For the ordering
// induced by the selection rule this reproduces the skewed path masses.
inline std::map<TokenSeq, double> polymatroid_qgamma(const std::vector<TokenSeq>& ordering,
                                                     const ModelPair& pair, int paths) {
  if (paths < 1) throw InputError("polymatroid_qgamma: path count must be >= 1");
  TreeShape tree = pair.ctx_tree();
  const std::int64_t n_paths = tree.level_count(pair.horizon);
  if (static_cast<std::int64_t>(ordering.size()) != n_paths)
    throw InputError("polymatroid_qgamma: ordering must list every length-L path");
  std::vector<bool> seen(static_cast<std::size_t>(n_paths), false);
  for (const TokenSeq& seq : ordering) {
    if (static_cast<int>(seq.size()) != pair.horizon)
      throw InputError("polymatroid_qgamma: ordering entry has wrong length");
    for (Token t : seq)
      if (t < 0 || t >= pair.vocab)
        throw InputError("polymatroid_qgamma: token outside vocabulary");
    std::int64_t rk = tree.rank_of_seq(seq);
    if (seen[rk]) throw InputError("polymatroid_qgamma: ordering repeats a path");
    seen[rk] = true;
  }

  DistVec qleaf = seqspace::joint_dist(pair, Side::draft, pair.horizon, kDefaultEnumerationCap);
  std::map<TokenSeq, double> out;
  multipath::NeumaierSum consumed;
  for (const TokenSeq& seq : ordering) {
    double q = qleaf[tree.rank_of_seq(seq)];
    double a = consumed.value();
    out[seq] = q * multipath::detail::powsum(a + q, a, paths);
    consumed.add(q);
  }
  return out;
}

}  // namespace specverify::lp
