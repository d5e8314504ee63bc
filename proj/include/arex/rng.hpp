#ifndef AREX_RNG_HPP
#define AREX_RNG_HPP

#include <cstdint>
#include <cmath>

#include "arex/common.hpp"

// Deterministic random streams. Every consumer derives its own stream from
// (run seed, stream id, substream id), so per-agent draws do not depend on
// iteration order or thread count, and replays are bitwise identical.
// Generator and transforms are self-contained: standard-library distributions
// are implementation-defined and would break replay guarantees.

namespace arex::numkit {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng() : Rng(0, 0, 0) {}
  Rng(uint64_t seed, uint64_t stream, uint64_t substream = 0) {
    uint64_t mix = seed;
    (void)splitmix64(mix);
    mix ^= 0xa5a5a5a5a5a5a5a5ULL + stream;
    (void)splitmix64(mix);
    mix ^= 0x5a5a5a5a5a5a5a5aULL + substream;
    for (auto& word : s_) word = splitmix64(mix);
  }

  uint64_t next_u64() {
    // xoshiro256++
    uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1): 53-bit mantissa.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in {0, ..., n-1}; rejection keeps it exact.
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) throw DomainError("uniform_index: empty range");
    uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller; no cached spare, so the draw count per
  // call is fixed and replays stay aligned.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double gaussian(double mu, double sd) { return mu + sd * gaussian(); }

  Vec gaussian_vec(size_t n, double mu = 0.0, double sd = 1.0) {
    Vec v(n);
    for (auto& x : v) x = gaussian(mu, sd);
    return v;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace arex::numkit

#endif
