#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fcprint {

// Portable random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; uniform, normal and integer draws are
// computed here rather than through <random> distributions, whose algorithms
// are implementation-defined.
//
// Stream splitting: a child stream for the key path (k1, k2, ...) is seeded
// with derive_seed(parent, {k1, k2, ...}), where each step is
//   s <- splitmix64(s ^ splitmix64(k + 0x9E3779B97F4A7C15)).
// Two streams with different key paths are statistically independent for all
// practical purposes, and the derivation is trivially reproducible elsewhere.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via the Box-Muller transform; the second variate of each
  // pair is cached.
  double normal();
  // Uniform integer in [0, n) by rejection; n must be positive.
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Named stream tags used with derive_seed across modules.
namespace stream {
inline constexpr std::uint64_t kSubjectLoading = 1;
inline constexpr std::uint64_t kSessionLoading = 2;
inline constexpr std::uint64_t kGroupLoading = 3;
inline constexpr std::uint64_t kSeries = 4;
inline constexpr std::uint64_t kAutoencoder = 10;
inline constexpr std::uint64_t kAutoencoderInit = 11;
inline constexpr std::uint64_t kAutoencoderShuffle = 12;
inline constexpr std::uint64_t kDictionary = 20;
inline constexpr std::uint64_t kPermutation = 30;
}  // namespace stream

}  // namespace fcprint
