#pragma once

#include <cstdint>

namespace ringform {

// Counter-based generator: output(seed, stream, counter) = splitmix64_mix(
//   seed + golden * (stream * 2^32 + counter + 1)).
// Uniform doubles take the top 53 bits: (x >> 11) * 2^-53.
// Portable by construction; any language with 64-bit unsigned wraparound
// reproduces the same placements.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix(seed_ + kGolden * ((stream_ << 32) + counter + 1));
  }

  std::uint64_t next() noexcept { return at(counter_++); }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace ringform
