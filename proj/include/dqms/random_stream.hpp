#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dqms/types.hpp"

namespace dqms {

// splitmix64 step; used to whiten seed/tag words before feeding mt19937_64.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic substream addressed by (seed, tag words).  Every draw is
// defined in terms of raw mt19937_64 output, so results are identical across
// platforms and standard library implementations.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, const std::vector<std::uint64_t>& tags) {
    std::uint64_t s = seed ^ 0x6a09e667f3bcc908ULL;
    std::uint64_t mixed = splitmix64(s);
    for (std::uint64_t t : tags) {
      s ^= t * 0x9e3779b97f4a7c15ULL;
      mixed ^= splitmix64(s);
    }
    eng_.seed(mixed);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int next_int(int n) { return static_cast<int>(eng_() % static_cast<std::uint64_t>(n)); }

  // Sample an index from an (unnormalized, nonnegative) weight vector by
  // inverse-CDF scan.
  int next_index(const dvec& weights) {
    double total = weights.sum();
    double u = next_double() * total;
    double acc = 0.0;
    for (index_t i = 0; i < weights.size(); ++i) {
      acc += weights(i);
      if (u < acc) return static_cast<int>(i);
    }
    // fp slack: fall back to the last positive weight
    for (index_t i = weights.size() - 1; i >= 0; --i) {
      if (weights(i) > 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  }

  // Standard normal via Box-Muller on raw 53-bit uniforms.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// Tag words for the independent substreams the protocol draws from.
inline constexpr std::uint64_t TAG_WORDS = 1;
inline constexpr std::uint64_t TAG_BINS = 2;
inline constexpr std::uint64_t TAG_DECODE = 3;

}  // namespace dqms
