#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace ccrs {

/// SplitMix64 finalizer; maps (seed, stream) pairs onto well-separated
/// engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seedable generator with a fixed stream-splitting rule: child stream `k`
/// of seed `s` is an mt19937_64 seeded with splitmix64(splitmix64(s) ^ k').
/// Permutation `b` of a randomization test always draws from stream `b`, so
/// the result does not depend on how permutations are scheduled on threads.
///
/// Bounded integers and shuffles are implemented here rather than with
/// std::uniform_int_distribution / std::shuffle, whose algorithms are
/// implementation-defined; outputs are identical across standard libraries.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(engine_type(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL))));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound), bound >= 1. Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  explicit Rng(engine_type engine) : engine_(std::move(engine)) {}
  engine_type engine_;
};

}  // namespace ccrs
