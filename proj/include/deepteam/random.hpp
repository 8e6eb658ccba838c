#pragma once

#include <cstdint>
#include <random>

namespace deepteam {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream for (seed, stream id); the same pair always yields the same sequence.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

// Uniform in [0,1) from the top 53 bits; platform independent unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline int uniform_int(std::mt19937_64& g, int n) { return static_cast<int>(g() % static_cast<std::uint64_t>(n)); }

}  // namespace deepteam
