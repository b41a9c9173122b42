#pragma once

#include <cstdint>
#include <numbers>
#include <random>

namespace dgseg {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-task seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
  return mix_seed(mix_seed(global_seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double normal(Rng& rng, double sigma) {
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

// Uniform angle in [0, 2*pi).
inline double uniform_angle(Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = two_pi * uniform01(rng);
  return a >= two_pi ? 0.0 : a;
}

}  // namespace dgseg
