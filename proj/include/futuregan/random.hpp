#pragma once

#include <cstdint>
#include <random>

namespace futuregan {

/// Seed derivation for the independent random streams fanned out from one global seed.
enum class Stream : uint64_t {
  dataset = 1,
  init = 2,
  interpolation = 3,
  shuffle = 4,
};

constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t seed, Stream stream, uint64_t salt = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<uint64_t>(stream) << 56)) + salt);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline int64_t uniform_index(std::mt19937_64& rng, int64_t n) {
  return static_cast<int64_t>(uniform01(rng) * static_cast<double>(n));
}

}  // namespace futuregan
