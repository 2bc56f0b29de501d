#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace aif {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng{stream_seed(seed, stream)};
}

// Uniform on (0, 1]; never returns 0 so it is safe to take its log.
inline double uniform_open0(Rng& rng) {
  return 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inversion sampling: duration with P(D > d) = exp(-rate d) evaluated at u.
inline double exponential_from_uniform(double rate, double u) {
  if (!(rate > 0.0)) throw std::invalid_argument("exponential rate must be positive");
  return -std::log(u) / rate;
}

inline double sample_exponential(double rate, Rng& rng) {
  if (!(rate > 0.0)) throw std::invalid_argument("exponential rate must be positive");
  return exponential_from_uniform(rate, uniform_open0(rng));
}

// Box-Muller keeps draws reproducible independent of the standard library.
inline double standard_normal(Rng& rng) {
  const double u1 = uniform_open0(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace aif
