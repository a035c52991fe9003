#pragma once

// Deterministic randomness plumbing.  Every sampler takes an explicit
// RandomStream; per-trial streams are derived from (seed, index) tuples with
// splitmix64 so results never depend on execution order.  Bit-exactness
// across standard libraries is not a goal; per-seed determinism within one
// build is.

#include <cstdint>
#include <random>
#include <vector>

#include "specverify/errors.hpp"

namespace specverify {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes a base seed with up to three stream indices (trial number, grid
// coordinates, ...) into one engine seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b + 0xbf58476d1ce4e5b9ULL));
  h = splitmix64(h ^ (c + 0x94d049bb133111ebULL));
  return h;
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t engine_seed) : eng_(engine_seed) {}

  // uniform draw in [0, 1) with 53 random bits
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  // Index drawn from a probability vector by CDF walk (one uniform).  A total
  // short of 1 by floating-point dust falls through to the last positive
  // entry.
  int sample(const double* probs, int n) {
    double u = uniform();
    double cum = 0.0;
    int last_pos = -1;
    for (int i = 0; i < n; ++i) {
      if (probs[i] <= 0.0) continue;
      last_pos = i;
      cum += probs[i];
      if (u < cum) return i;
    }
    internal_check(last_pos >= 0, "RandomStream::sample: all-zero vector");
    return last_pos;
  }
  int sample(const std::vector<double>& probs) {
    return sample(probs.data(), static_cast<int>(probs.size()));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace specverify
