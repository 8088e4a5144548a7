#pragma once

#include <cstdint>
#include <random>

namespace qhedge {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Engine for one independent stream. All randomness in the library flows
/// from a single 64-bit seed; stream `i` (a path, a replication, a draw
/// batch) is seeded with splitmix64(splitmix64(seed) ^ splitmix64(i)), so
/// results never depend on how streams are distributed over workers.
inline std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851F42D4C957F2Dull)));
}

}  // namespace qhedge
