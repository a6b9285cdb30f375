#pragma once

// Seedable, reproducible random number generation.
//
// Streams are xoshiro256++ generators seeded through SplitMix64; substreams
// (one per replication) are derived by hashing (seed, index) with SplitMix64.
// All samplers are hand-rolled over the fixed integer generator so that a
// given (seed, index) pair yields the same draws on every standard-conforming
// platform and across runs, independent of the standard library in use.

#include <cmath>
#include <cstdint>

namespace deconvht {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stable 64-bit hash of (seed, index) used to derive substream seeds.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64_next(s);
  s = a ^ (index + 0x9E3779B97F4A7C15ULL);
  std::uint64_t b = splitmix64_next(s);
  return splitmix64_next(b);
}

// xoshiro256++ (Blackman & Vigna), state initialized via SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  // Substream constructor: an independent stream for (seed, index).
  Rng(std::uint64_t seed, std::uint64_t index) : Rng(derive_stream_seed(seed, index)) {}

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (two uniforms per draw, none cached, so the
  // stream position after a draw does not depend on earlier draws).
  double normal() {
    double u = uniform01();
    double v = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u));  // log(1-u), 1-u in (0,1]
    return r * std::cos(6.283185307179586476925286766559 * v);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Number of i.i.d. Bernoulli(p) attempts up to and including the first
  // success; support {1, 2, ...}.  P(N = j) = (1-p)^(j-1) p.
  std::int64_t geometric_attempts(double p) {
    if (p >= 1.0) return 1;
    double v = 1.0 - uniform01();  // v in (0, 1]
    double x = std::floor(std::log(v) / std::log1p(-p));
    if (x < 0.0) x = 0.0;
    return 1 + static_cast<std::int64_t>(x);
  }

  // Binomial(n, p) as a sum of Bernoulli draws (exact and stream-stable; the
  // n values used here are small enough that O(n) is immaterial).
  std::int64_t binomial(std::int64_t n, double p) {
    std::int64_t k = 0;
    for (std::int64_t i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace deconvht
