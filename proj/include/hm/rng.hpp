#pragma once

#include <cstdint>
#include <random>

namespace hm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 output is fixed by the standard; the distributions are not, so
// every draw goes through these helpers to stay portable.
using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return Engine(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

// Uniform in [0, 1).
inline double uniform01(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& e, double lo, double hi) { return lo + (hi - lo) * uniform01(e); }

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Engine& e, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = e();
  } while (r >= limit);
  return r % n;
}

}  // namespace hm
