#pragma once

#include <cstdint>
#include <string_view>

namespace tcnet {

// SplitMix64 generator. The uniform and bounded draws are defined here, not
// through <random> distributions, so a seed gives the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound) by rejection on the top of the range.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Independent named streams from one user seed:
// stream_seed = splitmix64_mix(seed ^ (stream_id * golden_ratio_constant)).
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kRotations = 3,
  kData = 4,
  kSplit = 5,
};

std::uint64_t mix64(std::uint64_t x) noexcept;

inline Rng make_stream(std::uint64_t seed, Stream stream) noexcept {
  return Rng(mix64(seed ^ (static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ull)));
}

}  // namespace tcnet
