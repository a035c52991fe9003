#pragma once

// Shared fixtures for the test suites.  make_i1() is the vocab-2 horizon-1
// pair used for hand-computed expected values throughout; its root row is the
// worked example exercised by the CLI docs as well.

#include "specverify/seqspace.hpp"

namespace svtest {

// ctx "":  p = (0.6, 0.4)   q = (0.3, 0.7)
// ctx "0": p = (0.2, 0.8)   q = (0.6, 0.4)
// ctx "1": p = (0.9, 0.1)   q = (0.5, 0.5)
inline specverify::seqspace::ModelPair make_i1() {
  specverify::seqspace::ModelPair mp;
  mp.vocab = 2;
  mp.horizon = 1;
  mp.zero_permitting = false;
  mp.p = {0.6, 0.4, 0.2, 0.8, 0.9, 0.1};
  mp.q = {0.3, 0.7, 0.6, 0.4, 0.5, 0.5};
  return mp;
}

// Horizon-2 pair whose root and "0" rows make the length-2 acceptance weights
// interesting (w("0") clamps, the continuation at "0" does not renormalize to
// anything simple).  Rows at the remaining contexts are fixed arbitrary.
inline specverify::seqspace::ModelPair make_l2() {
  specverify::seqspace::ModelPair mp;
  mp.vocab = 2;
  mp.horizon = 2;
  mp.zero_permitting = false;
  //          ""          "0"         "1"         "0,0"       "0,1"       "1,0"       "1,1"
  mp.p = {0.25, 0.75, 0.6, 0.4, 0.5, 0.5, 0.3, 0.7, 0.8, 0.2, 0.45, 0.55, 0.7, 0.3};
  mp.q = {0.5, 0.5, 0.3, 0.7, 0.4, 0.6, 0.6, 0.4, 0.35, 0.65, 0.25, 0.75, 0.5, 0.5};
  return mp;
}

// zero_permitting pair: the draft is deterministic after the first token, so
// half of the depth-2 contexts are unreachable for it.
inline specverify::seqspace::ModelPair make_zero_pair() {
  specverify::seqspace::ModelPair mp;
  mp.vocab = 2;
  mp.horizon = 2;
  mp.zero_permitting = true;
  //          ""          "0"         "1"         "0,0"       "0,1"        "1,0"         "1,1"
  mp.p = {0.3, 0.7, 0.5, 0.5, 0.8, 0.2, 0.4, 0.6, 0.9, 0.1, 0.25, 0.75, 0.5, 0.5};
  mp.q = {0.6, 0.4, 1.0, 0.0, 0.0, 1.0, 0.6, 0.4, 0.35, 0.65, 0.25, 0.75, 0.5, 0.5};
  return mp;
}

}  // namespace svtest
