#pragma once

#include <cstdint>
#include <random>

namespace frmab {

// Seeded 64-bit Mersenne Twister with platform-independent real conversion.
//
// std::mt19937_64 has a standardized output sequence, but the standard
// distributions do not, so uniform() is built directly on the raw 64-bit
// output. Independent streams are derived with SplitMix64 over
// (seed, stream id); benchmark generators use one stream per project index so
// that project i's parameters do not depend on n.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(mix(mix(seed) ^ (stream * 0x9E3779B97F4A7C15ULL + 1))) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on the open interval (lo, hi).
  double uniform_open(double lo, double hi);

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  Rng split(std::uint64_t stream) { return Rng(next(), stream); }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::mt19937_64 engine_;
};

}  // namespace frmab
