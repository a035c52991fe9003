#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "specverify/rng.hpp"
#include "specverify/seqspace.hpp"
#include "support.hpp"

using namespace specverify;
using namespace specverify::seqspace;
using Catch::Matchers::WithinAbs;

namespace {

// Independent oracle: enumerate every subset of tree nodes and keep the ones
// that are pairwise prefix-free.  Exponential in node count, usable only for
// the smallest shapes, which is the point.
std::set<std::vector<TokenSeq>> antichains_by_subset_filter(int vocab, int depth) {
  TreeShape tree(vocab, depth);
  std::vector<TokenSeq> nodes;
  for (int lv = 0; lv <= depth; ++lv)
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) nodes.push_back(tree.seq_at(lv, rk));
  auto is_prefix = [](const TokenSeq& a, const TokenSeq& b) {
    return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
  };
  const std::size_t n = nodes.size();
  REQUIRE(n <= 20);
  std::set<std::vector<TokenSeq>> out;
  for (std::uint32_t bits = 0; bits < (std::uint32_t{1} << n); ++bits) {
    std::vector<TokenSeq> members;
    for (std::size_t i = 0; i < n; ++i)
      if (bits >> i & 1) members.push_back(nodes[i]);
    bool ok = true;
    for (std::size_t i = 0; ok && i < members.size(); ++i)
      for (std::size_t j = i + 1; ok && j < members.size(); ++j)
        if (is_prefix(members[i], members[j]) || is_prefix(members[j], members[i])) ok = false;
    if (!ok) continue;
    std::sort(members.begin(), members.end());
    out.insert(std::move(members));
  }
  return out;
}

std::set<std::vector<TokenSeq>> antichains_by_enumeration(int vocab, int depth) {
  std::set<std::vector<TokenSeq>> out;
  for (Antichain chain : enumerate_antichains(vocab, depth)) {
    std::sort(chain.begin(), chain.end());
    bool fresh = out.insert(std::move(chain)).second;
    REQUIRE(fresh);  // each antichain must be visited exactly once
  }
  return out;
}

}  // namespace

TEST_CASE("tree shape indexing", "[seqspace]") {
  TreeShape tree(3, 2);
  REQUIRE(tree.level_begin(0) == 0);
  REQUIRE(tree.level_begin(1) == 1);
  REQUIRE(tree.level_begin(2) == 4);
  REQUIRE(tree.total_nodes() == 13);
  REQUIRE(tree.level_count(2) == 9);

  for (int lv = 0; lv <= 2; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      REQUIRE(tree.level_of(node) == lv);
      REQUIRE(tree.rank_of(node) == rk);
      TokenSeq seq = tree.seq_at(lv, rk);
      REQUIRE(static_cast<int>(seq.size()) == lv);
      REQUIRE(tree.id_of_seq(seq) == node);
    }
  }

  REQUIRE(tree.seq_at(2, 5) == TokenSeq{1, 2});
  REQUIRE(tree.child_rank(1, 2) == 5);
  REQUIRE(tree.parent_rank(5) == 1);
  REQUIRE(tree.last_token(5) == 2);

  REQUIRE_THROWS_AS(TreeShape(0, 1), InputError);
  REQUIRE_THROWS_AS(TreeShape(2, -1), InputError);
  REQUIRE_THROWS_AS(TreeShape(2, 64), ResourceError);
  REQUIRE_THROWS_AS(tree.id_of_seq(TokenSeq{0, 1, 2}), InputError);
  REQUIRE_THROWS_AS(tree.id_of_seq(TokenSeq{3}), InputError);
}

TEST_CASE("context keys", "[seqspace]") {
  REQUIRE(context_key({}) == "");
  REQUIRE(context_key({2, 0, 11}) == "2,0,11");
  REQUIRE(parse_context_key("", 5) == TokenSeq{});
  REQUIRE(parse_context_key("2,0,4", 5) == TokenSeq{2, 0, 4});
  REQUIRE_THROWS_AS(parse_context_key("2,,1", 5), InputError);
  REQUIRE_THROWS_AS(parse_context_key("5", 5), InputError);
  REQUIRE_THROWS_AS(parse_context_key("-1", 5), InputError);
  REQUIRE_THROWS_AS(parse_context_key("x", 5), InputError);
  REQUIRE_THROWS_AS(parse_context_key("1x", 5), InputError);
}

TEST_CASE("antichain counts", "[seqspace]") {
  REQUIRE(antichain_count(2, 0) == 2);
  REQUIRE(antichain_count(2, 1) == 5);
  REQUIRE(antichain_count(2, 2) == 26);
  REQUIRE(antichain_count(2, 3) == 677);
  REQUIRE(antichain_count(3, 1) == 9);
  REQUIRE(antichain_count(3, 2) == 730);
  REQUIRE(antichain_count(3, 3) == 389017001);
  REQUIRE(antichain_count(3, 3, 1000) == 1000);        // saturates at the ceiling
  REQUIRE(antichain_count(2, 40) == std::uint64_t{1} << 62);
}

TEST_CASE("antichain enumeration matches subset filter", "[seqspace]") {
  for (auto [vocab, depth] : {std::pair{2, 1}, {2, 2}, {2, 3}, {3, 1}, {3, 2}}) {
    auto oracle = antichains_by_subset_filter(vocab, depth);
    auto fast = antichains_by_enumeration(vocab, depth);
    REQUIRE(oracle.size() == antichain_count(vocab, depth));
    REQUIRE(fast == oracle);
  }
}

TEST_CASE("antichain enumeration respects the cap", "[seqspace]") {
  REQUIRE_THROWS_AS(enumerate_antichains(3, 3), ResourceError);
  REQUIRE_THROWS_AS(enumerate_antichains(2, 2, 25), ResourceError);
  REQUIRE(enumerate_antichains(2, 2, 26).size() == 26);
}

TEST_CASE("path probabilities on the pinned pair", "[seqspace]") {
  ModelPair mp = svtest::make_i1();
  validate_pair(mp);

  REQUIRE(path_prob(mp, Side::target, {}) == 1.0);
  REQUIRE_THAT(path_prob(mp, Side::target, {0}), WithinAbs(0.6, 1e-15));
  REQUIRE_THAT(path_prob(mp, Side::target, {0, 1}), WithinAbs(0.48, 1e-15));
  REQUIRE_THAT(path_prob(mp, Side::target, {1, 0}), WithinAbs(0.36, 1e-15));
  REQUIRE_THAT(path_prob(mp, Side::draft, {1}), WithinAbs(0.7, 1e-15));

  // the draft table stops at the horizon, the target one level past it
  REQUIRE_THROWS_AS(path_prob(mp, Side::draft, TokenSeq{0, 1}), InputError);
  REQUIRE_THROWS_AS(path_prob(mp, Side::target, TokenSeq{0, 1, 0}), InputError);
  REQUIRE_THROWS_AS(path_prob(mp, Side::target, TokenSeq{2}), InputError);
}

TEST_CASE("path probability tables agree with the scalar form", "[seqspace]") {
  ModelPair mp = gen_model_pair(7, 3, 2, dirichlet_family());
  for (Side side : {Side::target, Side::draft}) {
    int max_level = mp.max_len(side);
    DistVec table = path_prob_table(mp, side, max_level);
    TreeShape tree(mp.vocab, max_level);
    for (int lv = 0; lv <= max_level; ++lv)
      for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk)
        REQUIRE_THAT(table[tree.id(lv, rk)], WithinAbs(path_prob(mp, side, tree.seq_at(lv, rk)), 1e-12));
  }
}

TEST_CASE("joint distributions normalize and marginalize", "[seqspace]") {
  ModelPair mp = svtest::make_i1();
  DistVec j2 = joint_dist(mp, Side::target, 2);
  REQUIRE(j2.size() == 4);
  REQUIRE_THAT(j2[0], WithinAbs(0.12, 1e-15));
  REQUIRE_THAT(j2[1], WithinAbs(0.48, 1e-15));
  REQUIRE_THAT(j2[2], WithinAbs(0.36, 1e-15));
  REQUIRE_THAT(j2[3], WithinAbs(0.04, 1e-15));

  ModelPair rnd = gen_model_pair(11, 3, 2, dirichlet_family(0.7));
  for (Side side : {Side::target, Side::draft}) {
    int len = rnd.max_len(side);
    DistVec full = joint_dist(rnd, side, len);
    REQUIRE_THAT(std::accumulate(full.begin(), full.end(), 0.0), WithinAbs(1.0, 1e-12));
    DistVec marg(full.size() / rnd.vocab, 0.0);
    for (std::size_t i = 0; i < full.size(); ++i) marg[i / rnd.vocab] += full[i];
    DistVec prev = joint_dist(rnd, side, len - 1);
    for (std::size_t i = 0; i < marg.size(); ++i) REQUIRE_THAT(marg[i], WithinAbs(prev[i], 1e-12));
  }

  REQUIRE_THROWS_AS(joint_dist(mp, Side::target, 2, 3), ResourceError);
  REQUIRE_THROWS_AS(joint_dist(mp, Side::target, 5), InputError);
}

TEST_CASE("prefix mass tables", "[seqspace]") {
  ModelPair mp = svtest::make_i1();
  PrefixDist d = PrefixDist::from_draft(mp);
  REQUIRE_THAT(d.at(0, 0), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(d.at(1, 0), WithinAbs(0.3, 1e-15));
  REQUIRE_THAT(d.at(1, 1), WithinAbs(0.7, 1e-15));

  PrefixDist lifted = PrefixDist::from_leaf_masses(2, 1, {0.3, 0.7});
  REQUIRE(lifted.mass == d.mass);

  DistVec cond = d.conditionals(0, 0);
  REQUIRE_THAT(cond[0], WithinAbs(0.3, 1e-15));
  REQUIRE_THAT(cond[1], WithinAbs(0.7, 1e-15));

  ModelPair rnd = gen_model_pair(3, 2, 2, dirichlet_family());
  PrefixDist rd = PrefixDist::from_leaf_masses(2, 2, joint_dist(rnd, Side::draft, 2));
  PrefixDist direct = PrefixDist::from_draft(rnd);
  for (std::size_t i = 0; i < rd.mass.size(); ++i)
    REQUIRE_THAT(rd.mass[i], WithinAbs(direct.mass[i], 1e-12));
  TreeShape tree(2, 2);
  for (int lv = 0; lv < 2; ++lv)
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      DistVec got = rd.conditionals(lv, rk);
      const double* want = rnd.q_row(tree.id(lv, rk));
      for (int x = 0; x < 2; ++x) REQUIRE_THAT(got[x], WithinAbs(want[x], 1e-12));
    }

  PrefixDist dead = PrefixDist::from_leaf_masses(2, 2, {0.0, 0.0, 0.5, 0.5});
  REQUIRE_THROWS_AS(dead.conditionals(1, 0), InputError);
  REQUIRE_THROWS_AS(PrefixDist::from_leaf_masses(2, 2, {0.5, 0.5}), InputError);
}

TEST_CASE("generated pairs are valid and deterministic", "[seqspace]") {
  for (GenFamily fam : {dirichlet_family(0.5), sharpened_family(1.0, 0.5), identical_family()}) {
    ModelPair a = gen_model_pair(42, 3, 2, fam);
    ModelPair b = gen_model_pair(42, 3, 2, fam);
    ModelPair c = gen_model_pair(43, 3, 2, fam);
    REQUIRE_NOTHROW(validate_pair(a));
    REQUIRE(a.p == b.p);
    REQUIRE(a.q == b.q);
    REQUIRE(a.q != c.q);
    for (double v : a.q) REQUIRE(v >= kDraftFloor);
  }

  ModelPair same = gen_model_pair(9, 4, 1, identical_family());
  REQUIRE(same.p == same.q);

  ModelPair sharp = gen_model_pair(9, 4, 1, sharpened_family(1.0, 0.25));
  // low temperature concentrates the target relative to the draft
  double pmax = *std::max_element(sharp.p.begin(), sharp.p.begin() + 4);
  double qmax = *std::max_element(sharp.q.begin(), sharp.q.begin() + 4);
  REQUIRE(pmax > qmax);

  REQUIRE_THROWS_AS(gen_model_pair(1, 1, 1, dirichlet_family()), InputError);
  REQUIRE_THROWS_AS(gen_model_pair(1, 2, 0, dirichlet_family()), InputError);
  REQUIRE_THROWS_AS(gen_model_pair(1, 2, 1, dirichlet_family(0.0)), InputError);
  REQUIRE_THROWS_AS(gen_model_pair(1, 2, 1, sharpened_family(1.0, 0.0)), InputError);
  REQUIRE_THROWS_AS(gen_model_pair(1, 2, 1, dirichlet_family(), 0.5), InputError);
}

TEST_CASE("pair validation catches malformed tables", "[seqspace]") {
  ModelPair mp = svtest::make_i1();
  REQUIRE_NOTHROW(validate_pair(mp));

  ModelPair bad = mp;
  bad.p[2] = 0.5;  // context "0" now sums to 1.3
  REQUIRE_THROWS_WITH(validate_pair(bad), Catch::Matchers::ContainsSubstring("\"0\""));

  bad = mp;
  bad.q[4] = 0.0;
  bad.q[5] = 1.0;  // draft zero without the flag
  REQUIRE_THROWS_AS(validate_pair(bad), InputError);
  bad.zero_permitting = true;
  REQUIRE_NOTHROW(validate_pair(bad));

  bad = mp;
  bad.p.pop_back();
  REQUIRE_THROWS_AS(validate_pair(bad), InputError);

  bad = mp;
  bad.p[0] = -0.1;
  bad.p[1] = 1.1;
  REQUIRE_THROWS_AS(validate_pair(bad), InputError);
}

TEST_CASE("random streams", "[seqspace]") {
  RandomStream rs(mix_seed(123, 4, 5));
  for (int i = 0; i < 1000; ++i) {
    double u = rs.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }

  RandomStream picker(7);
  std::vector<double> point{0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) REQUIRE(picker.sample(point) == 1);

  std::vector<double> pair{0.5, 0.5};
  bool saw0 = false, saw1 = false;
  for (int i = 0; i < 200; ++i) {
    int s = picker.sample(pair);
    saw0 |= s == 0;
    saw1 |= s == 1;
  }
  REQUIRE(saw0);
  REQUIRE(saw1);

  std::vector<double> zero{0.0, 0.0};
  REQUIRE_THROWS_AS(picker.sample(zero), InternalError);

  REQUIRE(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
  REQUIRE(mix_seed(1) != mix_seed(2));
}
