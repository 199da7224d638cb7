#pragma once

#include <cstdint>
#include <random>

namespace roblc {

// SplitMix64 step. Used both as a mixing function and to derive independent
// sub-stream seeds from one base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed for sub-stream (a, b) of a base seed. Every source of
// randomness in the library draws its seed through this, so a single base
// seed replays an entire run regardless of thread count.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ (0x8000000000000000ULL | a)) + b);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace roblc
