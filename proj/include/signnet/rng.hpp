#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace signnet {

/// Counter-based 64-bit generator.
///
/// Output i of a stream with key k is splitmix64_mix(k + (i + 1) * 0x9E3779B97F4A7C15),
/// i.e. SplitMix64 with its state viewed as an explicit counter. Streams are
/// keyed from (seed, stream id) so per-node or per-epoch randomness does not
/// depend on evaluation order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + kGamma))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    auto x = (*this)();
    auto m = static_cast<unsigned __int128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<unsigned __int128>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream ids for the independent consumers of one run seed.
enum class RngStream : std::uint64_t {
  kSplit = 1,
  kGcnInit = 2,
  kGcnDropout = 3,
  kSampler = 4,
  kModelInit = 5,
  kShuffle = 6,
  kDropout = 7,
  kSynthetic = 8,
};

inline CounterRng make_rng(std::uint64_t seed, RngStream stream, std::uint64_t sub = 0) {
  return CounterRng(seed, (static_cast<std::uint64_t>(stream) << 48) ^ sub);
}

}  // namespace signnet
