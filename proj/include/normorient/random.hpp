#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>

namespace normorient {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr double to_unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based generator: every draw is a pure function of (seed, key...),
/// so the values a ray sees do not depend on which thread traced it.
class KeyedRng {
 public:
  explicit constexpr KeyedRng(std::uint64_t seed) : seed_(seed) {}

  constexpr std::uint64_t seed() const { return seed_; }

  constexpr std::uint64_t hash(std::initializer_list<std::uint64_t> key) const {
    std::uint64_t h = splitmix64(seed_);
    for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
  }

  /// Two independent uniforms in [0, 1).
  constexpr std::pair<double, double> uniform2(std::initializer_list<std::uint64_t> key) const {
    const std::uint64_t h = hash(key);
    return {to_unit_double(h), to_unit_double(splitmix64(h ^ 0xd1b54a32d192ed03ULL))};
  }

 private:
  std::uint64_t seed_;
};

/// Sequential stream on top of the keyed hash, for loops where draws are
/// naturally ordered (RANSAC sampling).
class RandomStream {
 public:
  constexpr RandomStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return rng_.hash({stream_, counter_++}); }
  double uniform() { return to_unit_double(next_u64()); }

  // Uniform integer in [0, n); n > 0. Modulo bias is below 2^-40 for the sizes used here.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double gaussian() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  KeyedRng rng_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace normorient
