#pragma once

#include <cstdint>

namespace stn {

// Counter-style SplitMix64 stream. Cheap to copy, trivially portable, and
// splittable: derive(tag) yields an independent child stream without
// disturbing the parent, so parallel generators can share one root seed.
//
//   next_u64:  state += 0x9E3779B97F4A7C15, then finalize (Steele et al.)
//   derive:    child seed = mix64(state ^ mix64(tag))
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  RngStream derive(std::uint64_t tag) const {
    return RngStream(mix64(state_ ^ mix64(tag)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double next_gaussian();

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

}  // namespace stn
