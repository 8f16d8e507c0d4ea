#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, a, b), so results do not depend on draw order, thread
// scheduling or the standard library's distribution implementations.
//
// Algorithm: the key words are folded through the SplitMix64 finalizer
// (Steele, Lea & Flood 2014); the top 53 bits of the result give a uniform
// on the open interval (0,1). Standard normals use the cosine branch of
// Box-Muller on two uniforms drawn with sub-counters 0 and 1.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace fdrecon::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t a, std::uint64_t b,
                                    std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ c);
}

/// Uniform on (0,1).
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
  const std::uint64_t bits = hash(seed, stream, a, b, c) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline double standard_normal(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t a, std::uint64_t b = 0) {
  const double u1 = uniform(seed, stream, a, b, 0);
  const double u2 = uniform(seed, stream, a, b, 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Fisher-Yates shuffle driven by the counter-based uniform.
template <typename T>
void shuffle(std::span<T> items, std::uint64_t seed, std::uint64_t stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const double u = uniform(seed, stream, i);
    auto j = static_cast<std::size_t>(u * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(items[i - 1], items[j]);
  }
}

/// Named streams used across the library.
enum Stream : std::uint64_t {
  kScores = 1,
  kTargetNoise = 2,
  kCovariateNoise = 3,
  kTruncation = 4,
  kFolds = 5,
  kTestScores = 6,
  kTestTargetNoise = 7,
  kTestCovariateNoise = 8,
};

}  // namespace fdrecon::rng
