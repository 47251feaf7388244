#pragma once

#include <cstdint>
#include <string_view>

namespace fracperc {

// Counter-based randomness: every draw is a pure function of a key, so the
// order in which cells are visited never changes a realization.

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
}

/// Map the top 53 bits of a hash to a double in [0, 1).
constexpr double to_unit(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Key of the single Bernoulli draw deciding survival of one cell.
struct RandomStreamKey {
  std::uint64_t seed;
  int level;
  std::uint64_t ix;
  std::uint64_t iy;

  /// Hash of (seed, level), shared by every cell of one level.
  static std::uint64_t level_prefix(std::uint64_t seed, int level) noexcept {
    return hash_combine(mix64(seed), static_cast<std::uint64_t>(level));
  }

  static std::uint64_t finish(std::uint64_t prefix, std::uint64_t ix, std::uint64_t iy) noexcept {
    return hash_combine(hash_combine(prefix, ix), iy);
  }

  std::uint64_t digest() const noexcept { return finish(level_prefix(seed, level), ix, iy); }

  double uniform() const noexcept { return to_unit(digest()); }
};

/// Derive an independent child seed from a parent seed and a counter.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter) noexcept {
  return hash_combine(mix64(seed ^ 0x5851f42d4c957f2dULL), counter);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t counter) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  }
  return derive_seed(hash_combine(seed, h), counter);
}

/// Small deterministic generator for sampling positions and angles in
/// experiments; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return to_unit((*this)()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace fracperc
