#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace csi {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a seed with per-use salts so that derived
/// streams (epoch, batch, ...) are independent but reproducible.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salts) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t s : salts) h = mix(h ^ mix(s));
  return h;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng));
}

}  // namespace csi
