#pragma once

// Single-path verifiers: token-level speculative sampling (ss_*) and
// block-level prefix verification (bv_*), plus exact output-distribution
// enumerators used as oracles.  Both verifiers consume one drafted block and
// emit the accepted prefix and a correction token; both are exact samplers of
// some output distribution over sequences of length 1..L+1, and the bv_*
// family is constructed so that completing its output with target
// conditionals reproduces the target joint.
//
// The draft side is abstracted as per-prefix conditional vectors (BlockViews)
// so the same verifier runs against the raw draft or a skewed draft table.

#include <map>
#include <optional>
#include <vector>

#include "specverify/errors.hpp"
#include "specverify/rng.hpp"
#include "specverify/seqspace.hpp"

namespace specverify::verify {

using seqspace::DistVec;
using seqspace::ModelPair;
using seqspace::PrefixDist;
using seqspace::Token;
using seqspace::TokenSeq;
using seqspace::TreeShape;

// Denominator floor for the prefix-acceptance ratio; below it the prefix is
// only reachable with probability 0 and acceptance is pinned to 1 to keep the
// sampler total.
inline constexpr double kAcceptDenomTol = 1e-15;

// Branch probabilities at or below this are treated as floating-point dust by
// the exact enumerators (dropped rather than asserted on).
inline constexpr double kBranchDustTol = 1e-12;

// ============================================================================
// residual distributions
// ============================================================================

// normalize(max(p − q, 0)); nullopt when the positive part carries no mass
// (p = q), in which case no correction draw is defined.
inline std::optional<DistVec> token_residual(const DistVec& p_vec, const DistVec& q_vec) {
  internal_check(p_vec.size() == q_vec.size(), "token_residual: size mismatch");
  DistVec out(p_vec.size());
  double sum = 0.0;
  for (std::size_t x = 0; x < p_vec.size(); ++x) {
    out[x] = std::max(p_vec[x] - q_vec[x], 0.0);
    sum += out[x];
  }
  if (!(sum > 0.0)) return std::nullopt;
  for (double& v : out) v /= sum;
  return out;
}

// normalize(max(w·p − q, 0)); the weighted form used at block-verifier
// fallback points.  w = 1 reduces to token_residual.
inline std::optional<DistVec> block_residual(const DistVec& p_vec, const DistVec& q_vec, double w) {
  internal_check(p_vec.size() == q_vec.size(), "block_residual: size mismatch");
  internal_check(w >= 0.0 && w <= 1.0, "block_residual: weight outside [0,1]");
  DistVec out(p_vec.size());
  double sum = 0.0;
  for (std::size_t x = 0; x < p_vec.size(); ++x) {
    out[x] = std::max(w * p_vec[x] - q_vec[x], 0.0);
    sum += out[x];
  }
  if (!(sum > 0.0)) return std::nullopt;
  for (double& v : out) v /= sum;
  return out;
}

// ============================================================================
// block views
// ============================================================================

// One drafted block together with the conditional vectors the verifiers
// need: target conditionals at prefix lengths 0..L (the length-L row feeds
// the full-acceptance continuation), draft conditionals at lengths 0..L-1.
struct BlockViews {
  TokenSeq block;
  std::vector<DistVec> p;  // prefix lengths 0..L
  std::vector<DistVec> q;  // prefix lengths 0..L-1

  int len() const { return static_cast<int>(block.size()); }
};

// Views for a block drafted from the pair's own draft table.
inline BlockViews make_block_views(const ModelPair& pair, const TokenSeq& block) {
  if (static_cast<int>(block.size()) != pair.horizon)
    throw InputError("block length != horizon");
  TreeShape tree = pair.ctx_tree();
  BlockViews v;
  v.block = block;
  v.p.resize(block.size() + 1);
  v.q.resize(block.size());
  std::int64_t rank = 0;
  for (int i = 0; i <= pair.horizon; ++i) {
    std::int64_t node = tree.id(i, rank);
    v.p[i] = pair.p_vec(node);
    if (i < pair.horizon) {
      Token t = block[i];
      if (t < 0 || t >= pair.vocab) throw InputError("block token outside vocabulary");
      v.q[i] = pair.q_vec(node);
      rank = rank * pair.vocab + t;
    }
  }
  return v;
}

// Views with the draft side replaced by an explicit prefix-mass table (a
// skewed draft).  Target conditionals still come from the pair.
inline BlockViews make_block_views(const ModelPair& pair, const PrefixDist& q_view,
                                   const TokenSeq& block) {
  BlockViews v = make_block_views(pair, block);
  if (q_view.vocab != pair.vocab || q_view.len != pair.horizon)
    throw InputError("draft view shape does not match the pair");
  std::int64_t rank = 0;
  for (int i = 0; i < pair.horizon; ++i) {
    v.q[i] = q_view.conditionals(i, rank);
    rank = rank * pair.vocab + block[i];
  }
  return v;
}

// ============================================================================
// block-verifier schedule
// ============================================================================

// Acceptance schedule along one drafted block.  w is the on-path weight:
// w(empty) = 1, w(a_{1:i}) = min(1, w(a_{1:i-1})·p(a_i|·)/q(a_i|·)).  r is
// the weighted residual mass at each interior prefix, r(a_{1:i}) =
// sum_x max(w(a_{1:i})·p(x|·) − q(x|·), 0), and h = r/(1 − w + r) is the
// independent acceptance probability of that prefix.  The full block is
// accepted with probability w(a_{1:L}).
//
// Invariant (the reason for weighting r by w): with these h, the probability
// that at least i tokens survive, conditioned on the draft path, is exactly
// w(a_{1:i}); that identity is what makes completion with target
// conditionals reproduce the target joint.
struct BvSchedule {
  std::vector<double> w;  // prefix lengths 0..L
  std::vector<double> r;  // prefix lengths 0..L-1
  std::vector<double> h;  // prefix lengths 0..L-1

  double final_accept() const { return w.back(); }
};

inline BvSchedule bv_schedule(const BlockViews& v) {
  const int len = v.len();
  BvSchedule s;
  s.w.resize(len + 1);
  s.r.resize(len);
  s.h.resize(len);
  s.w[0] = 1.0;
  for (int i = 0; i < len; ++i) {
    double r = 0.0;
    for (std::size_t x = 0; x < v.p[i].size(); ++x)
      r += std::max(s.w[i] * v.p[i][x] - v.q[i][x], 0.0);
    s.r[i] = r;
    double denom = 1.0 - s.w[i] + r;
    // denom < tol forces w = 1 and r = 0: fallback to this prefix has
    // probability 0, and pinning h keeps the sampler total
    s.h[i] = denom < kAcceptDenomTol ? 1.0 : r / denom;
    double qc = v.q[i][v.block[i]];
    if (!(qc > 0.0)) throw InputError("drafted token has zero draft probability");
    s.w[i + 1] = std::min(1.0, s.w[i] * v.p[i][v.block[i]] / qc);
  }
  return s;
}

// ============================================================================
// verifier outcomes
// ============================================================================

struct VerifierOutcome {
  int tau = 0;         // length of the longest accepted prefix
  TokenSeq accepted;   // that prefix (length tau)
  Token correction = 0;

  TokenSeq output() const {
    TokenSeq out = accepted;
    out.push_back(correction);
    return out;
  }
};

// Token-level verifier: accept token i with probability min(1, p/q); the
// first strict rejection fixes tau; correction from token_residual at the
// rejection context, or from the target continuation after a full accept.
// One uniform per token in path order, then one draw for the correction.
inline VerifierOutcome ss_verify(const BlockViews& v, RandomStream& rs) {
  const int len = v.len();
  int tau = len;
  for (int i = 0; i < len; ++i) {
    double pt = v.p[i][v.block[i]];
    double qt = v.q[i][v.block[i]];
    if (!(qt > 0.0)) throw InputError("drafted token has zero draft probability");
    double accept = std::min(1.0, pt / qt);
    bool ok = rs.uniform() < accept;  // draw even after a rejection: fixed draw count
    if (!ok && tau == len) tau = i;
  }
  VerifierOutcome out;
  out.tau = tau;
  out.accepted.assign(v.block.begin(), v.block.begin() + tau);
  if (tau == len) {
    out.correction = static_cast<Token>(rs.sample(v.p[len]));
  } else {
    std::optional<DistVec> res = token_residual(v.p[tau], v.q[tau]);
    // rejection probability is 0 wherever the residual is empty
    internal_check(res.has_value(), "ss_verify: empty residual at a rejection point");
    out.correction = static_cast<Token>(rs.sample(*res));
  }
  return out;
}

inline VerifierOutcome ss_verify(const ModelPair& pair, const TokenSeq& block, RandomStream& rs) {
  return ss_verify(make_block_views(pair, block), rs);
}

// Block-level verifier: every interior prefix is accepted independently with
// probability h, the full block with probability w(a_{1:L}); tau is the
// longest accepted prefix.  Correction from the w-weighted residual at the
// fallback prefix, or from the target continuation.  Uniforms are drawn for
// every prefix, shallowest first, then the full block, then the correction.
inline VerifierOutcome bv_verify(const BlockViews& v, RandomStream& rs) {
  const int len = v.len();
  BvSchedule s = bv_schedule(v);
  int tau = -1;
  for (int i = 0; i < len; ++i)
    if (rs.uniform() < s.h[i]) tau = i;
  if (rs.uniform() < s.w[len]) tau = len;
  // h at the empty prefix is identically 1, so some prefix always accepts
  internal_check(tau >= 0, "bv_verify: no accepted prefix");
  VerifierOutcome out;
  out.tau = tau;
  out.accepted.assign(v.block.begin(), v.block.begin() + tau);
  if (tau == len) {
    out.correction = static_cast<Token>(rs.sample(v.p[len]));
  } else {
    std::optional<DistVec> res = block_residual(v.p[tau], v.q[tau], s.w[tau]);
    internal_check(res.has_value(), "bv_verify: empty residual at a fallback point");
    out.correction = static_cast<Token>(rs.sample(*res));
  }
  return out;
}

inline VerifierOutcome bv_verify(const ModelPair& pair, const TokenSeq& block, RandomStream& rs) {
  return bv_verify(make_block_views(pair, block), rs);
}

// ============================================================================
// draft sampling
// ============================================================================

inline TokenSeq sample_block(const ModelPair& pair, RandomStream& rs) {
  TreeShape tree = pair.ctx_tree();
  TokenSeq block(static_cast<std::size_t>(pair.horizon));
  std::int64_t rank = 0;
  for (int i = 0; i < pair.horizon; ++i) {
    Token t = static_cast<Token>(rs.sample(pair.q_row(tree.id(i, rank)), pair.vocab));
    block[i] = t;
    rank = rank * pair.vocab + t;
  }
  return block;
}

inline TokenSeq sample_block(const PrefixDist& q_view, RandomStream& rs) {
  TokenSeq block(static_cast<std::size_t>(q_view.len));
  std::int64_t rank = 0;
  for (int i = 0; i < q_view.len; ++i) {
    DistVec cond = q_view.conditionals(i, rank);
    Token t = static_cast<Token>(rs.sample(cond));
    block[i] = t;
    rank = rank * q_view.vocab + t;
  }
  return block;
}

// ============================================================================
// exact output distributions
// ============================================================================

enum class Algorithm { ss, bv };

inline const char* algorithm_name(Algorithm alg) { return alg == Algorithm::ss ? "ss" : "bv"; }

// Distribution of the verifier output (accepted prefix plus correction
// token): nonempty sequences of length 1..L+1.
struct OutputDistribution {
  std::map<TokenSeq, double> probs;

  double total_mass() const {
    double sum = 0.0;
    for (const auto& [seq, v] : probs) sum += v;
    return sum;
  }
  double expected_len() const {
    double sum = 0.0;
    for (const auto& [seq, v] : probs) sum += v * static_cast<double>(seq.size());
    return sum;
  }
  double at(const TokenSeq& seq) const {
    auto it = probs.find(seq);
    return it == probs.end() ? 0.0 : it->second;
  }
};

// Spreads all acceptance/correction branches of the block verifier for one
// drafted block into an output distribution, weighted by block_prob.  Shared
// by the single-path and multi-path enumeration oracles.  An empty residual
// reachable with more than dust probability is a logic error and asserts.
inline void add_bv_branches(const BlockViews& v, double block_prob, OutputDistribution& out) {
  const int len = v.len();
  const int vocab = static_cast<int>(v.p[0].size());
  auto add = [&](int prefix_len, Token y, double prob) {
    if (!(prob > 0.0)) return;
    TokenSeq seq(v.block.begin(), v.block.begin() + prefix_len);
    seq.push_back(y);
    out.probs[seq] += prob;
  };
  BvSchedule s = bv_schedule(v);
  for (Token y = 0; y < vocab; ++y) add(len, y, block_prob * s.w[len] * v.p[len][y]);
  double tail_reject = 1.0 - s.w[len];
  for (int i = len - 1; i >= 0; --i) {
    double prob = block_prob * s.h[i] * tail_reject;
    tail_reject *= 1.0 - s.h[i];
    if (!(prob > 0.0)) continue;
    std::optional<DistVec> res = block_residual(v.p[i], v.q[i], s.w[i]);
    if (!res.has_value()) {
      internal_check(prob <= kBranchDustTol, "add_bv_branches: empty residual on a live branch");
      continue;
    }
    for (Token y = 0; y < vocab; ++y) add(i, y, prob * (*res)[y]);
  }
}

// Exact output distribution by full enumeration: every draft block with
// positive probability, every acceptance pattern, every correction token.
// q_view, when given, replaces the draft both for block probabilities and
// inside the verifier.
inline OutputDistribution exact_output_dist_single(Algorithm alg, const ModelPair& pair,
                                                   const PrefixDist* q_view = nullptr,
                                                   std::uint64_t cap = seqspace::kDefaultEnumerationCap) {
  if (q_view && (q_view->vocab != pair.vocab || q_view->len != pair.horizon))
    throw InputError("draft view shape does not match the pair");
  if (seqspace::pow_saturating(pair.vocab, pair.horizon, cap + 1) > cap)
    throw ResourceError("exact_output_dist_single: V^L exceeds enumeration cap");
  const int len = pair.horizon;
  TreeShape tree = pair.ctx_tree();
  OutputDistribution out;

  BlockViews v;
  v.block.assign(static_cast<std::size_t>(len), 0);
  v.p.resize(static_cast<std::size_t>(len) + 1);
  v.q.resize(static_cast<std::size_t>(len));

  auto add = [&](int prefix_len, Token y, double prob) {
    if (!(prob > 0.0)) return;
    TokenSeq seq(v.block.begin(), v.block.begin() + prefix_len);
    seq.push_back(y);
    out.probs[seq] += prob;
  };

  auto process_block = [&](double block_prob) {
    if (alg == Algorithm::bv) {
      add_bv_branches(v, block_prob, out);
      return;
    }
    double alive = block_prob;
    for (int i = 0; i < len; ++i) {
      double accept = std::min(1.0, v.p[i][v.block[i]] / v.q[i][v.block[i]]);
      double reject_prob = alive * (1.0 - accept);
      alive *= accept;
      if (!(reject_prob > 0.0)) continue;
      std::optional<DistVec> res = token_residual(v.p[i], v.q[i]);
      if (!res.has_value()) {
        internal_check(reject_prob <= kBranchDustTol,
                       "exact enumeration: empty residual on a live branch");
        continue;
      }
      for (Token y = 0; y < pair.vocab; ++y) add(i, y, reject_prob * (*res)[y]);
    }
    for (Token y = 0; y < pair.vocab; ++y) add(len, y, alive * v.p[len][y]);
  };

  auto rec = [&](auto&& self, int level, std::int64_t rank, double prob) -> void {
    std::int64_t node = tree.id(level, rank);
    v.p[level] = pair.p_vec(node);
    if (level == len) {
      process_block(prob);
      return;
    }
    v.q[level] = q_view ? q_view->conditionals(level, rank) : pair.q_vec(node);
    for (Token x = 0; x < pair.vocab; ++x) {
      double qc = v.q[level][x];
      if (!(qc > 0.0)) continue;
      v.block[level] = x;
      self(self, level + 1, rank * pair.vocab + x, prob * qc);
    }
  };
  rec(rec, 0, 0, 1.0);
  return out;
}

// Completion of an output distribution with target conditionals out to full
// length L+1, rank-indexed like joint_dist(target, L+1).  Target-matching
// means this equals the target joint.
inline DistVec completed_joint(const OutputDistribution& dist, const ModelPair& pair) {
  TreeShape out_tree = pair.out_tree();
  TreeShape ctx = pair.ctx_tree();
  const int full = pair.horizon + 1;
  DistVec out(static_cast<std::size_t>(out_tree.level_count(full)), 0.0);
  auto spread = [&](auto&& self, int level, std::int64_t rank, double mass) -> void {
    if (level == full) {
      out[rank] += mass;
      return;
    }
    const double* row = pair.p_row(ctx.id(level, rank));
    for (Token x = 0; x < pair.vocab; ++x)
      if (row[x] > 0.0) self(self, level + 1, rank * pair.vocab + x, mass * row[x]);
  };
  for (const auto& [seq, mass] : dist.probs) {
    if (!(mass > 0.0)) continue;
    int level = static_cast<int>(seq.size());
    internal_check(level >= 1 && level <= full, "completed_joint: bad sequence length");
    spread(spread, level, out_tree.rank_of_seq(seq), mass);
  }
  return out;
}

// ============================================================================
// analytic block-verifier efficiency
// ============================================================================

// E[tokens per block] for the block verifier against an arbitrary draft
// table: sum over all prefixes (lengths 0..L) of w(prefix)·q_view(prefix),
// where w generalizes the on-path weight to the whole tree.  Zero-mass
// branches contribute nothing and are skipped.
inline double bv_efficiency_analytic(const ModelPair& pair, const PrefixDist& q_view) {
  if (q_view.vocab != pair.vocab || q_view.len != pair.horizon)
    throw InputError("draft view shape does not match the pair");
  TreeShape tree = pair.ctx_tree();
  double eff = 0.0;
  auto rec = [&](auto&& self, int level, std::int64_t rank, double mass, double w) -> void {
    eff += w * mass;
    if (level == pair.horizon) return;
    const double* prow = pair.p_row(tree.id(level, rank));
    DistVec cond = q_view.conditionals(level, rank);
    for (Token x = 0; x < pair.vocab; ++x) {
      double qc = cond[x];
      if (!(qc > 0.0)) continue;
      self(self, level + 1, rank * pair.vocab + x, mass * qc, std::min(1.0, w * prow[x] / qc));
    }
  };
  rec(rec, 0, 0, 1.0, 1.0);
  return eff;
}

inline double bv_efficiency_analytic(const ModelPair& pair) {
  return bv_efficiency_analytic(pair, PrefixDist::from_draft(pair));
}

}  // namespace specverify::verify
