#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "otafl/types.hpp"

namespace otafl {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Independent stream for (seed, tag...). Streams for different tag tuples
// never share state, so trials and sweep points can run in any order.
inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = detail::splitmix64(seed);
  for (auto t : tags) h = detail::splitmix64(h ^ detail::splitmix64(t + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

// Stream tags.
enum StreamTag : std::uint64_t {
  kTagGeometry = 1,
  kTagChannel = 2,
  kTagData = 3,
  kTagNoise = 4,
  kTagSca = 5,
  kTagPartition = 6,
  kTagModelInit = 7,
};

// CN(0, var): real and imaginary parts are N(0, var/2).
inline cdouble complex_normal(Rng& rng, double var = 1.0) {
  std::normal_distribution<double> n(0.0, std::sqrt(var / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace otafl
