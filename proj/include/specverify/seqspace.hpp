#pragma once

// Token sequence spaces over a fixed vocabulary and horizon: prefix-tree
// indexing, target/draft conditional tables, antichain enumeration, synthetic
// pair generation, and exact path probabilities.  Everything downstream
// (verifiers, enumeration oracles, LP builders) consumes these structures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "specverify/errors.hpp"
#include "specverify/rng.hpp"

namespace specverify::seqspace {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;
using DistVec = std::vector<double>;

// Desk-scale guardrail for anything that enumerates sequences, tuples, or
// antichains.  Overridable per call (and via SPECLAB_CAP in the CLI).
inline constexpr std::uint64_t kDefaultEnumerationCap = 2'000'000;

// Shared tolerances: distribution-level equality vs. algebraic identities on
// clean inputs.
inline constexpr double kDistAtol = 1e-9;
inline constexpr double kAlgebraicAtol = 1e-12;

// Default floor applied to generated draft conditionals so every p/q ratio is
// finite and rankings stay well defined.
inline constexpr double kDraftFloor = 1e-6;

// ============================================================================
// context keys
// ============================================================================

// Canonical string form of a context: comma-separated token ids, empty string
// for the empty context.
inline std::string context_key(const TokenSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(seq[i]);
  }
  return out;
}

inline TokenSeq parse_context_key(const std::string& key, int vocab) {
  TokenSeq seq;
  if (key.empty()) return seq;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = key.find(',', pos);
    std::string part = key.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (part.empty()) throw InputError("bad context key \"" + key + "\": empty component");
    std::size_t used = 0;
    long value = 0;
    try {
      value = std::stol(part, &used);
    } catch (const std::exception&) {
      throw InputError("bad context key \"" + key + "\": non-numeric component \"" + part + "\"");
    }
    if (used != part.size() || value < 0 || value >= vocab)
      throw InputError("bad context key \"" + key + "\": token \"" + part +
                       "\" outside [0, " + std::to_string(vocab) + ")");
    seq.push_back(static_cast<Token>(value));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seq;
}

// ============================================================================
// prefix-tree indexing
// ============================================================================

// Complete V-ary tree with levels 0..depth.  Node ids are level-major:
// id = level_begin(level) + rank, where rank reads the sequence as a base-V
// number (first token most significant).  Small by construction; everything
// here is meant to be enumerated.
struct TreeShape {
  int vocab = 0;
  int depth = 0;
  std::vector<std::int64_t> offs;  // offs[i] = first id of level i; size depth+2

  TreeShape(int vocab_size, int tree_depth) : vocab(vocab_size), depth(tree_depth) {
    if (vocab < 1 || depth < 0) throw InputError("TreeShape: need vocab >= 1, depth >= 0");
    offs.resize(static_cast<std::size_t>(depth) + 2);
    offs[0] = 0;
    std::int64_t width = 1;
    for (int i = 0; i <= depth; ++i) {
      offs[static_cast<std::size_t>(i) + 1] = offs[i] + width;
      if (width > (std::int64_t{1} << 40))
        throw ResourceError("TreeShape: level width exceeds indexable range");
      width *= vocab;
    }
  }

  std::int64_t level_begin(int level) const { return offs[level]; }
  std::int64_t level_count(int level) const { return offs[static_cast<std::size_t>(level) + 1] - offs[level]; }
  std::int64_t total_nodes() const { return offs[static_cast<std::size_t>(depth) + 1]; }

  std::int64_t id(int level, std::int64_t rank) const { return offs[level] + rank; }
  int level_of(std::int64_t node_id) const {
    int lv = 0;
    while (node_id >= offs[static_cast<std::size_t>(lv) + 1]) ++lv;
    return lv;
  }
  std::int64_t rank_of(std::int64_t node_id) const { return node_id - offs[level_of(node_id)]; }

  std::int64_t child_rank(std::int64_t rank, Token x) const { return rank * vocab + x; }
  std::int64_t parent_rank(std::int64_t rank) const { return rank / vocab; }
  Token last_token(std::int64_t rank) const { return static_cast<Token>(rank % vocab); }

  std::int64_t rank_of_seq(const TokenSeq& seq) const {
    std::int64_t rank = 0;
    for (Token t : seq) {
      if (t < 0 || t >= vocab) throw InputError("token id " + std::to_string(t) + " outside vocabulary");
      rank = rank * vocab + t;
    }
    return rank;
  }
  std::int64_t id_of_seq(const TokenSeq& seq) const {
    if (static_cast<int>(seq.size()) > depth) throw InputError("sequence longer than tree depth");
    return id(static_cast<int>(seq.size()), rank_of_seq(seq));
  }
  TokenSeq seq_at(int level, std::int64_t rank) const {
    TokenSeq seq(static_cast<std::size_t>(level));
    for (int i = level; i-- > 0;) {
      seq[i] = static_cast<Token>(rank % vocab);
      rank /= vocab;
    }
    return seq;
  }
};

// V^e with a ceiling; returns `cap_at` when the true value would exceed it.
inline std::uint64_t pow_saturating(std::uint64_t base, int exponent, std::uint64_t cap_at) {
  std::uint64_t out = 1;
  for (int i = 0; i < exponent; ++i) {
    if (base != 0 && out > cap_at / base) return cap_at;
    out *= base;
    if (out > cap_at) return cap_at;
  }
  return out;
}

// ============================================================================
// model pairs
// ============================================================================

enum class Side { target, draft };

// A target/draft pair of full conditional tables: one probability vector per
// context of length 0..horizon, in node-id order.  Entry for token x at
// context node c sits at row(c)[x].  Immutable after construction by
// convention; all consumers are pure.
struct ModelPair {
  int vocab = 0;
  int horizon = 0;
  bool zero_permitting = false;  // loaded traces may carry exact q zeros
  DistVec p, q;                  // size total_nodes(ctx_tree) * vocab

  TreeShape ctx_tree() const { return TreeShape(vocab, horizon); }
  TreeShape out_tree() const { return TreeShape(vocab, horizon + 1); }

  const double* p_row(std::int64_t ctx_id) const { return p.data() + static_cast<std::size_t>(ctx_id) * vocab; }
  const double* q_row(std::int64_t ctx_id) const { return q.data() + static_cast<std::size_t>(ctx_id) * vocab; }
  const double* row(Side side, std::int64_t ctx_id) const {
    return side == Side::target ? p_row(ctx_id) : q_row(ctx_id);
  }
  DistVec p_vec(std::int64_t ctx_id) const { return DistVec(p_row(ctx_id), p_row(ctx_id) + vocab); }
  DistVec q_vec(std::int64_t ctx_id) const { return DistVec(q_row(ctx_id), q_row(ctx_id) + vocab); }

  int max_len(Side side) const { return side == Side::target ? horizon + 1 : horizon; }
};

// Structural and normalization checks; names the offending context on
// failure.  Generated pairs satisfy this by construction; loaded traces are
// funneled through it.
inline void validate_pair(const ModelPair& pair) {
  if (pair.vocab < 2) throw InputError("model pair: vocab_size must be >= 2");
  if (pair.horizon < 1) throw InputError("model pair: horizon must be >= 1");
  TreeShape tree = pair.ctx_tree();
  std::size_t want = static_cast<std::size_t>(tree.total_nodes()) * pair.vocab;
  if (pair.p.size() != want || pair.q.size() != want)
    throw InputError("model pair: table size does not match vocab/horizon");
  for (int lv = 0; lv <= pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      auto check_row = [&](const double* row, bool is_draft) {
        double sum = 0.0;
        for (int x = 0; x < pair.vocab; ++x) {
          double v = row[x];
          if (!(v >= 0.0))  // catches negatives and NaN
            throw InputError("context \"" + context_key(tree.seq_at(lv, rk)) +
                             "\": negative or non-finite probability");
          if (is_draft && v == 0.0 && !pair.zero_permitting)
            throw InputError("context \"" + context_key(tree.seq_at(lv, rk)) +
                             "\": draft probability 0 without zero_permitting");
          sum += v;
        }
        if (std::abs(sum - 1.0) > kDistAtol)
          throw InputError("context \"" + context_key(tree.seq_at(lv, rk)) +
                           "\": probabilities sum to " + std::to_string(sum));
      };
      check_row(pair.p_row(node), false);
      check_row(pair.q_row(node), true);
    }
  }
}

// Product of stored conditionals along seq; the empty sequence has
// probability 1.  The target table covers lengths up to horizon+1, the draft
// side is capped at horizon (one block).
inline double path_prob(const ModelPair& pair, Side side, const TokenSeq& seq) {
  if (static_cast<int>(seq.size()) > pair.max_len(side))
    throw InputError("path_prob: sequence length " + std::to_string(seq.size()) +
                     " exceeds limit " + std::to_string(pair.max_len(side)));
  TreeShape tree = pair.ctx_tree();
  double prob = 1.0;
  std::int64_t rank = 0;  // rank of the current context within its level
  int level = 0;
  for (Token t : seq) {
    if (t < 0 || t >= pair.vocab) throw InputError("path_prob: token id outside vocabulary");
    prob *= pair.row(side, tree.id(level, rank))[t];
    rank = rank * pair.vocab + t;
    ++level;
  }
  return prob;
}

// All path probabilities for one side, levels 0..max_level, node-id indexed
// over TreeShape(vocab, max_level).
inline DistVec path_prob_table(const ModelPair& pair, Side side, int max_level) {
  if (max_level > pair.max_len(side))
    throw InputError("path_prob_table: level exceeds side limit");
  TreeShape tree(pair.vocab, max_level);
  DistVec mass(static_cast<std::size_t>(tree.total_nodes()), 0.0);
  mass[0] = 1.0;
  for (int lv = 0; lv < max_level; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      const double* row = pair.row(side, node);  // context node ids coincide up to level horizon
      for (Token x = 0; x < pair.vocab; ++x)
        mass[tree.id(lv + 1, tree.child_rank(rk, x))] = mass[node] * row[x];
    }
  }
  return mass;
}

// Exact joint distribution over sequences of one fixed length, rank-indexed
// (TreeShape::seq_at decodes ranks).
inline DistVec joint_dist(const ModelPair& pair, Side side, int length,
                          std::uint64_t cap = kDefaultEnumerationCap) {
  if (length < 0 || length > pair.max_len(side))
    throw InputError("joint_dist: length outside table range");
  if (pow_saturating(pair.vocab, length, cap + 1) > cap)
    throw ResourceError("joint_dist: V^length exceeds enumeration cap");
  DistVec table = path_prob_table(pair, side, length);
  TreeShape tree(pair.vocab, length);
  return DistVec(table.begin() + tree.level_begin(length), table.end());
}

// ============================================================================
// prefix-mass tables
// ============================================================================

// Masses over all prefixes (levels 0..len) of some distribution on length-len
// paths, node-id indexed.  Conditionals are recovered as mass(child) /
// mass(node); used to view a skewed draft (or any path distribution)
// autoregressively.
struct PrefixDist {
  int vocab = 0;
  int len = 0;
  DistVec mass;  // node-id indexed over TreeShape(vocab, len)

  TreeShape tree() const { return TreeShape(vocab, len); }

  static PrefixDist from_leaf_masses(int vocab, int len, const DistVec& leaf) {
    TreeShape tree(vocab, len);
    if (static_cast<std::int64_t>(leaf.size()) != tree.level_count(len))
      throw InputError("PrefixDist: leaf vector size != V^len");
    PrefixDist out;
    out.vocab = vocab;
    out.len = len;
    out.mass.assign(static_cast<std::size_t>(tree.total_nodes()), 0.0);
    std::copy(leaf.begin(), leaf.end(), out.mass.begin() + tree.level_begin(len));
    for (int lv = len; lv-- > 0;) {
      for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
        double sum = 0.0;
        for (Token x = 0; x < vocab; ++x) sum += out.mass[tree.id(lv + 1, tree.child_rank(rk, x))];
        out.mass[tree.id(lv, rk)] = sum;
      }
    }
    return out;
  }

  // raw-draft view of a model pair: mass = draft path probability
  static PrefixDist from_draft(const ModelPair& pair) {
    PrefixDist out;
    out.vocab = pair.vocab;
    out.len = pair.horizon;
    out.mass = path_prob_table(pair, Side::draft, pair.horizon);
    return out;
  }

  double at(int level, std::int64_t rank) const { return mass[tree().id(level, rank)]; }

  // conditional vector at a node; the caller guarantees positive node mass
  DistVec conditionals(int level, std::int64_t rank) const {
    TreeShape shape = tree();
    double denom = mass[shape.id(level, rank)];
    if (!(denom > 0.0)) throw InputError("PrefixDist: conditionals of a zero-mass prefix");
    DistVec out(static_cast<std::size_t>(vocab));
    for (Token x = 0; x < vocab; ++x)
      out[x] = mass[shape.id(level + 1, shape.child_rank(rank, x))] / denom;
    return out;
  }
};

// ============================================================================
// antichains
// ============================================================================

using Antichain = std::vector<TokenSeq>;

// Number of antichains of the prefix poset of the full V-ary tree of depth L,
// empty antichain included: A(node) = 1 + prod_children A(child).  Saturates
// at `saturate_at` so counts beyond any enumerable size stay representable.
inline std::uint64_t antichain_count(int vocab, int depth,
                                     std::uint64_t saturate_at = std::uint64_t{1} << 62) {
  if (vocab < 1 || depth < 0) throw InputError("antichain_count: need vocab >= 1, depth >= 0");
  unsigned __int128 sat = saturate_at;
  unsigned __int128 a = 2;  // leaf level
  for (int lv = depth; lv-- > 0;) {
    unsigned __int128 prod = 1;
    for (int j = 0; j < vocab; ++j) {
      prod *= a;
      if (prod >= sat) {
        prod = sat;
        break;
      }
    }
    a = prod + 1;
    if (a >= sat) a = sat;
  }
  return static_cast<std::uint64_t>(a);
}

// Visits every antichain of the prefix poset of TreeShape(vocab, depth)
// exactly once, empty antichain included, in a fixed deterministic order.
// Members arrive as node ids.  Each worklist entry is either taken as a
// member or replaced by its children (a leaf simply dropped), which yields
// each antichain exactly once.
template <class Fn>
void for_each_antichain(int vocab, int depth, Fn&& fn) {
  TreeShape tree(vocab, depth);
  std::vector<std::pair<int, std::int64_t>> work{{0, 0}};  // (level, rank)
  std::vector<std::int64_t> members;
  auto rec = [&](auto&& self, std::size_t idx) -> void {
    if (idx == work.size()) {
      fn(static_cast<const std::vector<std::int64_t>&>(members));
      return;
    }
    auto [lv, rk] = work[idx];
    members.push_back(tree.id(lv, rk));
    self(self, idx + 1);
    members.pop_back();
    if (lv < depth) {
      std::size_t base = work.size();
      for (Token x = 0; x < vocab; ++x) work.emplace_back(lv + 1, tree.child_rank(rk, x));
      self(self, idx + 1);
      work.resize(base);
    } else {
      self(self, idx + 1);
    }
  };
  rec(rec, 0);
}

// Materialized antichain stream (members as token sequences).  Refuses to
// allocate past the cap; use for_each_antichain for cap-checked streaming at
// the call site.
inline std::vector<Antichain> enumerate_antichains(int vocab, int depth,
                                                   std::uint64_t cap = kDefaultEnumerationCap) {
  std::uint64_t count = antichain_count(vocab, depth, cap + 1);
  if (count > cap)
    throw ResourceError("enumerate_antichains: count exceeds cap " + std::to_string(cap));
  TreeShape tree(vocab, depth);
  std::vector<Antichain> out;
  out.reserve(count);
  for_each_antichain(vocab, depth, [&](const std::vector<std::int64_t>& ids) {
    Antichain chain;
    chain.reserve(ids.size());
    for (std::int64_t node : ids) chain.push_back(tree.seq_at(tree.level_of(node), tree.rank_of(node)));
    out.push_back(std::move(chain));
  });
  return out;
}

// ============================================================================
// synthetic pair generation
// ============================================================================

struct GenFamily {
  enum class Kind { dirichlet, sharpened, identical };
  Kind kind = Kind::dirichlet;
  double alpha = 1.0;        // symmetric Dirichlet concentration
  double temperature = 1.0;  // sharpened only: p proportional to base^(1/temperature)
};

inline GenFamily dirichlet_family(double alpha = 1.0) { return {GenFamily::Kind::dirichlet, alpha, 1.0}; }
inline GenFamily sharpened_family(double alpha, double temperature) {
  return {GenFamily::Kind::sharpened, alpha, temperature};
}
inline GenFamily identical_family(double alpha = 1.0) { return {GenFamily::Kind::identical, alpha, 1.0}; }

inline const char* family_name(GenFamily::Kind kind) {
  switch (kind) {
    case GenFamily::Kind::dirichlet: return "dirichlet";
    case GenFamily::Kind::sharpened: return "sharpened";
    case GenFamily::Kind::identical: return "identical";
  }
  return "?";
}

// Deterministic synthetic pair: one conditional per context, contexts visited
// in node-id order.  dirichlet draws p and q independently; sharpened draws a
// base vector, uses it (floored) as q and its 1/temperature power as p;
// identical uses one floored draw for both sides, so p equals q exactly.
// The draft floor is applied by convex mixing with the uniform distribution,
// keeping every p/q ratio finite.
inline ModelPair gen_model_pair(std::uint64_t seed, int vocab, int horizon, const GenFamily& family,
                                double draft_floor = kDraftFloor) {
  if (vocab < 2) throw InputError("gen_model_pair: vocab_size must be >= 2");
  if (horizon < 1) throw InputError("gen_model_pair: horizon must be >= 1");
  if (!(family.alpha > 0.0)) throw InputError("gen_model_pair: alpha must be > 0");
  if (!(family.temperature > 0.0)) throw InputError("gen_model_pair: temperature must be > 0");
  if (!(draft_floor > 0.0) || draft_floor * vocab >= 1.0)
    throw InputError("gen_model_pair: draft floor must lie in (0, 1/V)");

  std::mt19937_64 eng(splitmix64(seed));
  std::gamma_distribution<double> gamma(family.alpha, 1.0);
  auto draw_simplex = [&]() {
    DistVec v(static_cast<std::size_t>(vocab));
    double sum = 0.0;
    for (auto& x : v) {
      x = gamma(eng);
      sum += x;
    }
    if (sum <= 0.0) {  // possible only for tiny alpha via underflow
      std::fill(v.begin(), v.end(), 1.0 / vocab);
      return v;
    }
    for (auto& x : v) x /= sum;
    return v;
  };
  auto sharpen = [&](DistVec v) {
    double sum = 0.0;
    for (auto& x : v) {
      x = std::pow(x, 1.0 / family.temperature);
      sum += x;
    }
    if (sum <= 0.0) {
      std::fill(v.begin(), v.end(), 1.0 / vocab);
      return v;
    }
    for (auto& x : v) x /= sum;
    return v;
  };
  auto floor_mix = [&](DistVec v) {
    double lam = draft_floor * vocab;
    for (auto& x : v) x = (1.0 - lam) * x + draft_floor;
    return v;
  };

  ModelPair pair;
  pair.vocab = vocab;
  pair.horizon = horizon;
  TreeShape tree = pair.ctx_tree();
  std::size_t cells = static_cast<std::size_t>(tree.total_nodes()) * vocab;
  pair.p.resize(cells);
  pair.q.resize(cells);
  for (std::int64_t node = 0; node < tree.total_nodes(); ++node) {
    DistVec pv, qv;
    switch (family.kind) {
      case GenFamily::Kind::dirichlet:
        pv = draw_simplex();
        qv = floor_mix(draw_simplex());
        break;
      case GenFamily::Kind::sharpened: {
        DistVec base = draw_simplex();
        pv = sharpen(base);
        qv = floor_mix(std::move(base));
        break;
      }
      case GenFamily::Kind::identical:
        pv = floor_mix(draw_simplex());
        qv = pv;
        break;
    }
    std::copy(pv.begin(), pv.end(), pair.p.begin() + static_cast<std::size_t>(node) * vocab);
    std::copy(qv.begin(), qv.end(), pair.q.begin() + static_cast<std::size_t>(node) * vocab);
  }
  return pair;
}

}  // namespace specverify::seqspace
