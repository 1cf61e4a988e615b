#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace wdis {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream derivation: every random draw in the library is a
// function of (seed, stream ids), so no generator state has to be persisted.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {}) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t s : streams) h = splitmix64(h ^ splitmix64(s + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace wdis
