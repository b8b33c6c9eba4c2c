#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace exactk::numcore {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent, reproducible sub-stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

// Uniform integer in [0, n).
inline std::size_t index_below(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Fisher-Yates with index_below, so the sequence is fixed by the engine alone.
template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[index_below(rng, i)]);
  }
}

// k distinct draws from `pool` without replacement, in draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + index_below(rng, pool.size() - i)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace exactk::numcore
