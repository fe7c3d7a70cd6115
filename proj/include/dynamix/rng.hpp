#pragma once

#include <cstdint>
#include <random>

namespace dynamix {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from one run seed.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) with 53 random bits; independent of the standard library's
// distribution implementations so sampled action streams are portable.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double normal(Rng& rng, double mean, double stddev) {
  if (stddev <= 0.0) return mean;
  std::normal_distribution<double> dist(mean, stddev);
  return dist(rng);
}

inline long long poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<long long> dist(mean);
  return dist(rng);
}

inline double gamma(Rng& rng, double shape, double scale) {
  std::gamma_distribution<double> dist(shape, scale);
  return dist(rng);
}

}  // namespace dynamix
