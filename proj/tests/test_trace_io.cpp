#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "specverify/trace_io.hpp"
#include "support.hpp"

using namespace specverify;
using namespace specverify::seqspace;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

const char* kI1Text = R"({
  "vocab_size": 2,
  "horizon": 1,
  "nodes": {
    "":  {"p": [0.6, 0.4], "q": [0.3, 0.7]},
    "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
    "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
  }
})";

}  // namespace

TEST_CASE("trace parsing matches the pinned pair", "[trace_io]") {
  ModelPair got = trace_io::parse_trace(kI1Text);
  ModelPair want = svtest::make_i1();
  REQUIRE(got.vocab == 2);
  REQUIRE(got.horizon == 1);
  REQUIRE_FALSE(got.zero_permitting);
  for (std::size_t i = 0; i < want.p.size(); ++i) {
    REQUIRE_THAT(got.p[i], WithinAbs(want.p[i], 1e-15));
    REQUIRE_THAT(got.q[i], WithinAbs(want.q[i], 1e-15));
  }
}

TEST_CASE("trace round trip", "[trace_io]") {
  ModelPair pair = gen_model_pair(5, 3, 2, dirichlet_family(0.6));
  ModelPair back = trace_io::parse_trace(trace_io::trace_to_string(pair));
  REQUIRE(back.vocab == pair.vocab);
  REQUIRE(back.horizon == pair.horizon);
  for (std::size_t i = 0; i < pair.p.size(); ++i) {
    REQUIRE_THAT(back.p[i], WithinAbs(pair.p[i], 1e-12));
    REQUIRE_THAT(back.q[i], WithinAbs(pair.q[i], 1e-12));
  }

  std::string path = "trace_roundtrip_tmp.json";
  trace_io::save_trace(pair, path);
  ModelPair loaded = trace_io::load_trace(path);
  std::remove(path.c_str());
  for (std::size_t i = 0; i < pair.q.size(); ++i)
    REQUIRE_THAT(loaded.q[i], WithinAbs(pair.q[i], 1e-12));
}

TEST_CASE("trace loading renormalizes small drift", "[trace_io]") {
  std::string text = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [0.6000001, 0.4], "q": [0.3, 0.7]},
      "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  ModelPair pair = trace_io::parse_trace(text);
  REQUIRE_THAT(pair.p[0] + pair.p[1], WithinAbs(1.0, 1e-15));
}

TEST_CASE("trace rejection names the offending context", "[trace_io]") {
  std::string bad_sum = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [0.6, 0.4], "q": [0.3, 0.7]},
      "0": {"p": [0.3, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  REQUIRE_THROWS_WITH(trace_io::parse_trace(bad_sum), ContainsSubstring("\"0\""));

  std::string missing = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [0.6, 0.4], "q": [0.3, 0.7]},
      "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]}
    }
  })";
  REQUIRE_THROWS_WITH(trace_io::parse_trace(missing), ContainsSubstring("\"1\""));
}

TEST_CASE("trace rejection covers malformed input", "[trace_io]") {
  REQUIRE_THROWS_AS(trace_io::parse_trace("not json"), InputError);
  REQUIRE_THROWS_AS(trace_io::parse_trace("[1,2]"), InputError);
  REQUIRE_THROWS_AS(trace_io::parse_trace(R"({"vocab_size": 2, "horizon": 1})"), InputError);
  REQUIRE_THROWS_AS(trace_io::parse_trace(R"({"vocab_size": 2, "horizon": 0, "nodes": {}})"),
                    InputError);
  REQUIRE_THROWS_AS(trace_io::load_trace("no_such_file.json"), InputError);

  std::string bad_key = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [0.6, 0.4], "q": [0.3, 0.7]},
      "x": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  REQUIRE_THROWS_AS(trace_io::parse_trace(bad_key), InputError);

  std::string short_row = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [1.0], "q": [0.3, 0.7]},
      "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  REQUIRE_THROWS_AS(trace_io::parse_trace(short_row), InputError);
}

TEST_CASE("trace zero handling", "[trace_io]") {
  std::string zero = R"({
    "vocab_size": 2, "horizon": 1, "zero_permitting": true,
    "nodes": {
      "":  {"p": [0.6, 0.4], "q": [0.0, 1.0]},
      "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  ModelPair pair = trace_io::parse_trace(zero);
  REQUIRE(pair.zero_permitting);
  REQUIRE(pair.q[0] == 0.0);

  std::string zero_unflagged = R"({
    "vocab_size": 2, "horizon": 1,
    "nodes": {
      "":  {"p": [0.6, 0.4], "q": [0.0, 1.0]},
      "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
      "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
    }
  })";
  REQUIRE_THROWS_AS(trace_io::parse_trace(zero_unflagged), InputError);

  // round trip keeps the flag
  ModelPair back = trace_io::parse_trace(trace_io::trace_to_string(pair));
  REQUIRE(back.zero_permitting);
}
