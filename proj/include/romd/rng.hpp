#ifndef ROMD_RNG_HPP
#define ROMD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace romd {

/// Counter-based generator "romd-splitmix64-v1".
///
/// Output i (i = 0, 1, ...) of a stream with key k is mix64(k + (i + 1) * G),
/// G = 0x9E3779B97F4A7C15, mix64 = the SplitMix64 finalizer. This is the
/// SplitMix64 sequence seeded with k, so any implementation of SplitMix64
/// reproduces it. A child stream for tag t has key
/// mix64(k ^ mix64(t + 0xD1B54A32D192ED03)).
///
/// Derived draws:
///   uniform  u = (x >> 11) * 2^-53                      in [0, 1)
///   normal   Box-Muller on u1 = ((x1 >> 11) + 1) * 2^-53, u2 = uniform;
///            returns r cos(2 pi u2), then r sin(2 pi u2) on the next call
///   index    x mod n, rejecting x >= 2^64 - (2^64 mod n)
class CounterRng {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::string_view kName = "romd-splitmix64-v1";

  explicit CounterRng(std::uint64_t key = 0) : key_(key) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  CounterRng split(std::uint64_t tag) const {
    return CounterRng(mix64(key_ ^ mix64(tag + 0xD1B54A32D192ED03ULL)));
  }
  /// Nested split by several tags, left to right.
  template <typename... Tags>
  CounterRng split(std::uint64_t first, Tags... rest) const {
    if constexpr (sizeof...(rest) == 0) {
      return split(first);
    } else {
      return split(first).split(static_cast<std::uint64_t>(rest)...);
    }
  }

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = max() - (max() % n + 1) % n;
    for (;;) {
      const std::uint64_t x = (*this)();
      if (x <= limit) return x % n;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stable 64-bit tag for a string (FNV-1a), used to split streams by name.
constexpr std::uint64_t tag_of(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace romd

#endif  // ROMD_RNG_HPP
