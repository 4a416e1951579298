#pragma once

#include <cmath>
#include <cstdint>

namespace gridstate {

// Counter-free splitmix64 stream. Hand-rolled so that draws are bit-identical
// across standard libraries and so per-entry streams can be derived by
// hashing rather than by sequential consumption.
struct Rng {
  std::uint64_t state = 0x9e3779b97f4a7c15ull;

  explicit Rng(std::uint64_t seed = 0) : state(seed + 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one draw consumed per call pair, no cached state.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.28318530717958647692 * u2);
  }
};

// Mixes a stream label into a seed so independent substreams can be derived
// without coordinating draw counts.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
  Rng r(seed ^ (0x632be59bd9b4e019ull * (label + 1)));
  return r.next();
}

}  // namespace gridstate
