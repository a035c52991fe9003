#pragma once

// Multi-path machinery: per-context p/q token rankings, lexicographic
// selection among K drafted blocks, the closed-form skewed draft the
// selection induces, and the greedy multi-path verifier built from them.
// The verifier itself is the single-path block verifier run against the
// skewed draft; everything here is about constructing that draft exactly.
//
// Selection rule: each block maps to the tuple of (p/q ratio, token id)
// scores along its path; the block with the lexicographically largest tuple
// wins.  The ranking this induces over full paths makes "select the best of
// K i.i.d. drafts" an order statistic, so the selected-path distribution has
// the closed form B^K − A^K, where A is the draft mass ranked strictly below
// the path and B = A + q(path).  Prefix masses follow by summation and are
// computed with the same formula.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "specverify/errors.hpp"
#include "specverify/rng.hpp"
#include "specverify/seqspace.hpp"
#include "specverify/verify_single.hpp"

namespace specverify::multipath {

using seqspace::DistVec;
using seqspace::ModelPair;
using seqspace::PrefixDist;
using seqspace::Token;
using seqspace::TokenSeq;
using seqspace::TreeShape;
using verify::BlockViews;
using verify::OutputDistribution;
using verify::VerifierOutcome;

// Neumaier-compensated accumulator for the cumulative draft-mass sums; the
// masses feeding B^K − A^K deserve the extra digits.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// ============================================================================
// token rankings
// ============================================================================

// Score of one token at one context.  Ordering is (ratio, id) lexicographic;
// the id tie-break makes the order total, and every consumer (selection,
// closed-form masses) must use this same comparator.
struct TokenScore {
  double ratio = 0.0;
  Token id = 0;
};

inline bool score_less(const TokenScore& a, const TokenScore& b) {
  if (a.ratio != b.ratio) return a.ratio < b.ratio;
  return a.id < b.id;
}

struct LocalOrder {
  TokenSeq context;
  std::vector<TokenScore> scores;  // indexed by token id
};

// p/q scores for every token at a context.  Draft zeros map to +inf when the
// target still carries mass there and to 0 when both sides vanish, keeping
// the order defined without NaNs.
inline LocalOrder local_order(const ModelPair& pair, const TokenSeq& context) {
  if (static_cast<int>(context.size()) >= pair.horizon)
    throw InputError("local_order: context must be shorter than the horizon");
  TreeShape tree = pair.ctx_tree();
  std::int64_t node = tree.id_of_seq(context);
  const double* p = pair.p_row(node);
  const double* q = pair.q_row(node);
  LocalOrder out;
  out.context = context;
  out.scores.resize(static_cast<std::size_t>(pair.vocab));
  for (Token x = 0; x < pair.vocab; ++x) {
    double ratio;
    if (q[x] > 0.0)
      ratio = p[x] / q[x];
    else
      ratio = p[x] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.scores[x] = {ratio, x};
  }
  return out;
}

struct RatioTuple {
  std::vector<TokenScore> entries;  // one per block position
};

inline bool tuple_less(const RatioTuple& a, const RatioTuple& b) {
  internal_check(a.entries.size() == b.entries.size(), "tuple_less: length mismatch");
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (score_less(a.entries[i], b.entries[i])) return true;
    if (score_less(b.entries[i], a.entries[i])) return false;
  }
  return false;
}

inline RatioTuple ratio_tuple(const ModelPair& pair, const TokenSeq& block) {
  if (static_cast<int>(block.size()) != pair.horizon)
    throw InputError("ratio_tuple: block length != horizon");
  RatioTuple out;
  out.entries.reserve(block.size());
  TokenSeq prefix;
  for (Token t : block) {
    LocalOrder ord = local_order(pair, prefix);
    if (t < 0 || t >= pair.vocab) throw InputError("ratio_tuple: token outside vocabulary");
    out.entries.push_back(ord.scores[t]);
    prefix.push_back(t);
  }
  return out;
}

// Index of the block with the lexicographically largest ratio tuple.  Equal
// blocks (same token sequence) keep the smallest index; distinct blocks
// cannot tie, since their tuples differ at the first divergence.
inline int lex_select(const std::vector<TokenSeq>& blocks, const ModelPair& pair) {
  if (blocks.empty()) throw InputError("lex_select: need at least one block");
  int best = 0;
  RatioTuple best_tuple = ratio_tuple(pair, blocks[0]);
  for (int k = 1; k < static_cast<int>(blocks.size()); ++k) {
    RatioTuple t = ratio_tuple(pair, blocks[k]);
    if (tuple_less(best_tuple, t)) {
      best = k;
      best_tuple = std::move(t);
    }
  }
  return best;
}

// ============================================================================
// the skewed draft
// ============================================================================

namespace detail {

// sum_{m=0}^{k-1} b^m a^{k-1-m}; equals (b^k - a^k)/(b - a) without the
// cancellation.  All arguments nonnegative.
inline double powsum(double b, double a, int k) {
  double s = 0.0, bp = 1.0;
  for (int j = 0; j < k; ++j) {
    s = s * a + bp;
    bp *= b;
  }
  return s;
}

// Per-token draft mass ranked strictly below each token at one context,
// under the shared (ratio, id) order.  One sorted pass with a compensated
// cumulative sum.
inline DistVec below_mass(const LocalOrder& ord, const double* qrow, int vocab) {
  std::vector<int> order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return score_less(ord.scores[a], ord.scores[b]); });
  DistVec below(static_cast<std::size_t>(vocab));
  NeumaierSum acc;
  for (int x : order) {
    below[x] = acc.value();
    acc.add(qrow[x]);
  }
  return below;
}

// Cursor for walking prefixes while carrying the closed-form ingredients:
// qmass = q(a_{1:i}), below = draft mass ranked strictly below the prefix.
struct SkewCursor {
  double qmass = 1.0;
  NeumaierSum below;

  // the skewed mass of the current prefix
  double mass(int k) const {
    double a = below.value();
    return qmass * powsum(a + qmass, a, k);
  }
};

// advance the cursor by one token; below[t] from the context's local order
inline void cursor_step(SkewCursor& cur, double below_t, double q_t) {
  cur.below.add(cur.qmass * below_t);
  cur.qmass *= q_t;
}

}  // namespace detail

// Closed-form mass of one prefix under the best-of-K selection.
inline double skewed_mass(const ModelPair& pair, const TokenSeq& prefix, int paths) {
  if (paths < 1) throw InputError("skewed_mass: path count must be >= 1");
  if (static_cast<int>(prefix.size()) > pair.horizon)
    throw InputError("skewed_mass: prefix longer than horizon");
  detail::SkewCursor cur;
  TokenSeq ctx;
  for (Token t : prefix) {
    if (t < 0 || t >= pair.vocab) throw InputError("skewed_mass: token outside vocabulary");
    LocalOrder ord = local_order(pair, ctx);
    const double* qrow = pair.q_row(pair.ctx_tree().id_of_seq(ctx));
    DistVec below = detail::below_mass(ord, qrow, pair.vocab);
    detail::cursor_step(cur, below[t], qrow[t]);
    ctx.push_back(t);
  }
  return cur.mass(paths);
}

// Conditional next-token vector of the skewed draft at a prefix, computed in
// one pass over the local order.  Undefined (input error) at zero-mass
// prefixes.
inline DistVec skewed_conditionals(const ModelPair& pair, const TokenSeq& prefix, int paths) {
  if (paths < 1) throw InputError("skewed_conditionals: path count must be >= 1");
  if (static_cast<int>(prefix.size()) >= pair.horizon)
    throw InputError("skewed_conditionals: prefix must be shorter than the horizon");
  detail::SkewCursor cur;
  TokenSeq ctx;
  for (Token t : prefix) {
    LocalOrder ord = local_order(pair, ctx);
    const double* qrow = pair.q_row(pair.ctx_tree().id_of_seq(ctx));
    DistVec below = detail::below_mass(ord, qrow, pair.vocab);
    detail::cursor_step(cur, below[t], qrow[t]);
    ctx.push_back(t);
  }
  double denom = cur.mass(paths);
  if (!(denom > 0.0)) throw InputError("skewed_conditionals: zero-mass prefix");
  LocalOrder ord = local_order(pair, prefix);
  const double* qrow = pair.q_row(pair.ctx_tree().id_of_seq(prefix));
  DistVec below = detail::below_mass(ord, qrow, pair.vocab);
  DistVec out(static_cast<std::size_t>(pair.vocab));
  for (Token x = 0; x < pair.vocab; ++x) {
    detail::SkewCursor child = cur;
    detail::cursor_step(child, below[x], qrow[x]);
    out[x] = child.mass(paths) / denom;
  }
  return out;
}

// Fully materialized skewed draft: closed-form mass at every prefix.
struct SkewedDraft {
  int paths = 1;
  PrefixDist dist;
};

inline SkewedDraft build_skewed_draft(const ModelPair& pair, int paths,
                                      std::uint64_t cap = seqspace::kDefaultEnumerationCap) {
  if (paths < 1) throw InputError("build_skewed_draft: path count must be >= 1");
  if (seqspace::pow_saturating(pair.vocab, pair.horizon, cap + 1) > cap)
    throw ResourceError("build_skewed_draft: V^L exceeds enumeration cap");
  TreeShape tree = pair.ctx_tree();
  SkewedDraft out;
  out.paths = paths;
  out.dist.vocab = pair.vocab;
  out.dist.len = pair.horizon;
  out.dist.mass.assign(static_cast<std::size_t>(tree.total_nodes()), 0.0);
  auto rec = [&](auto&& self, int level, std::int64_t rank, const detail::SkewCursor& cur) -> void {
    out.dist.mass[tree.id(level, rank)] = cur.mass(paths);
    if (level == pair.horizon) return;
    LocalOrder ord = local_order(pair, tree.seq_at(level, rank));
    const double* qrow = pair.q_row(tree.id(level, rank));
    DistVec below = detail::below_mass(ord, qrow, pair.vocab);
    for (Token x = 0; x < pair.vocab; ++x) {
      if (!(qrow[x] > 0.0)) continue;  // dead branches keep mass 0
      detail::SkewCursor child = cur;
      detail::cursor_step(child, below[x], qrow[x]);
      self(self, level + 1, rank * pair.vocab + x, child);
    }
  };
  rec(rec, 0, 0, detail::SkewCursor{});
  return out;
}

// Block views whose draft side is the skewed draft along one block, computed
// on the fly (no full-tree materialization).
inline BlockViews skewed_block_views(const ModelPair& pair, const TokenSeq& block, int paths) {
  BlockViews v = verify::make_block_views(pair, block);
  detail::SkewCursor cur;
  TreeShape tree = pair.ctx_tree();
  std::int64_t rank = 0;
  for (int i = 0; i < pair.horizon; ++i) {
    double denom = cur.mass(paths);
    // any draftable block has positive skewed mass along its whole path
    internal_check(denom > 0.0, "skewed_block_views: zero-mass prefix on a drafted block");
    LocalOrder ord = local_order(pair, tree.seq_at(i, rank));
    const double* qrow = pair.q_row(tree.id(i, rank));
    DistVec below = detail::below_mass(ord, qrow, pair.vocab);
    for (Token x = 0; x < pair.vocab; ++x) {
      detail::SkewCursor child = cur;
      detail::cursor_step(child, below[x], qrow[x]);
      v.q[i][x] = child.mass(paths) / denom;
    }
    Token t = block[i];
    if (!(qrow[t] > 0.0)) throw InputError("skewed_block_views: block leaves the draft support");
    detail::cursor_step(cur, below[t], qrow[t]);
    rank = rank * pair.vocab + t;
  }
  return v;
}

// ============================================================================
// the greedy multi-path verifier
// ============================================================================

// Select the best of K drafted blocks, then run the block verifier against
// the skewed draft that selection induces.  K = 1 degenerates to single-path
// block verification exactly.
inline VerifierOutcome gbv_verify(const ModelPair& pair, const std::vector<TokenSeq>& blocks,
                                  RandomStream& rs) {
  int k0 = lex_select(blocks, pair);
  BlockViews v = skewed_block_views(pair, blocks[k0], static_cast<int>(blocks.size()));
  return verify::bv_verify(v, rs);
}

inline std::vector<TokenSeq> sample_blocks(const ModelPair& pair, int paths, RandomStream& rs) {
  if (paths < 1) throw InputError("sample_blocks: path count must be >= 1");
  std::vector<TokenSeq> out;
  out.reserve(static_cast<std::size_t>(paths));
  for (int k = 0; k < paths; ++k) out.push_back(verify::sample_block(pair, rs));
  return out;
}

// ============================================================================
// brute-force oracles
// ============================================================================

// Distribution of the selected block, by enumerating every K-tuple of draft
// paths.  Exponential in L·K; the check that the closed form above matches
// this is the main correctness oracle for the skewed draft.
inline std::map<TokenSeq, double> selection_dist_bruteforce(
    const ModelPair& pair, int paths, std::uint64_t cap = seqspace::kDefaultEnumerationCap) {
  if (paths < 1) throw InputError("selection_dist_bruteforce: path count must be >= 1");
  if (pair.horizon > 60 / paths ||
      seqspace::pow_saturating(pair.vocab, pair.horizon * paths, cap + 1) > cap)
    throw ResourceError("selection_dist_bruteforce: V^(L*K) exceeds enumeration cap");
  TreeShape tree(pair.vocab, pair.horizon);
  const std::int64_t n_paths = tree.level_count(pair.horizon);
  DistVec leaf = seqspace::joint_dist(pair, seqspace::Side::draft, pair.horizon, cap);

  std::vector<TokenSeq> seqs;
  std::vector<RatioTuple> tuples;
  seqs.reserve(static_cast<std::size_t>(n_paths));
  tuples.reserve(static_cast<std::size_t>(n_paths));
  for (std::int64_t rk = 0; rk < n_paths; ++rk) {
    seqs.push_back(tree.seq_at(pair.horizon, rk));
    tuples.push_back(ratio_tuple(pair, seqs.back()));
  }

  std::map<TokenSeq, double> out;
  std::vector<std::int64_t> pick(static_cast<std::size_t>(paths), 0);
  while (true) {
    double prob = 1.0;
    for (std::int64_t rk : pick) prob *= leaf[rk];
    if (prob > 0.0) {
      int best = 0;
      for (int k = 1; k < paths; ++k)
        if (tuple_less(tuples[pick[best]], tuples[pick[k]])) best = k;
      out[seqs[pick[best]]] += prob;
    }
    int pos = paths - 1;
    while (pos >= 0 && ++pick[pos] == n_paths) pick[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

// Exact output distribution of the multi-path verifier: selected-block
// probabilities from the tuple enumeration, acceptance and correction
// branches from the skewed-draft schedule.
inline OutputDistribution exact_output_dist_multi(const ModelPair& pair, int paths,
                                                  std::uint64_t cap = seqspace::kDefaultEnumerationCap) {
  std::map<TokenSeq, double> selected = selection_dist_bruteforce(pair, paths, cap);
  OutputDistribution out;
  for (const auto& [block, prob] : selected) {
    if (!(prob > 0.0)) continue;
    verify::add_bv_branches(skewed_block_views(pair, block, paths), prob, out);
  }
  return out;
}

}  // namespace specverify::multipath
