/**
 * @file rng.hpp
 * @brief Counter-based deterministic random number generator.
 *
 * SplitMix64 over a (seed, counter) pair. The draw sequence depends only on
 * the 64-bit seed, so datasets and training runs replay bit-exactly.
 * Workers never share a generator; derive a child with a distinct stream id.
 */
#pragma once

#include <cmath>
#include <cstdint>

namespace wwm {

class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) : seed_(seed), counter_(0) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // uniform in [0,1), 53 random mantissa bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo,hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0,n)
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    u1 = u1 > 0 ? u1 : 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // truncated normal on [-2s, 2s], resampled
  double trunc_normal(double stddev) {
    for (int i = 0; i < 64; ++i) {
      double x = normal() * stddev;
      if (std::fabs(x) <= 2.0 * stddev) return x;
    }
    return 0.0;
  }

  // Gumbel(0,1) sample for Gumbel-softmax
  double gumbel() {
    double u = uniform();
    u = u > 0 ? u : 0x1.0p-53;
    return -std::log(-std::log(u));
  }

  // Independent child stream. mix(seed, id) so children of distinct ids and
  // of distinct parents never collide.
  Rng child(uint64_t stream_id) const {
    uint64_t z = seed_ ^ (0x5851F42D4C957F2DULL * (stream_id + 1));
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
    return Rng(z ^ (z >> 33));
  }

  Rng child(uint64_t a, uint64_t b) const { return child(a).child(b); }
  Rng child(uint64_t a, uint64_t b, uint64_t c) const { return child(a).child(b).child(c); }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace wwm
