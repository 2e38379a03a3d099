#pragma once

#include <cstdint>

namespace moestress::detail {

// splitmix64: stateless counter-based mixer. Used for lazy per-(seed, token,
// component) values so nothing has to be materialized up front.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits. Bit-exact across platforms,
// unlike std::uniform_real_distribution.
inline double to_unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double unit_double(std::uint64_t key) {
  return to_unit_double(splitmix64(key));
}

// Uniform double in [lo, hi).
inline double range_double(std::uint64_t key, double lo, double hi) {
  return lo + (hi - lo) * unit_double(key);
}

// Combines stream identifiers into one splitmix64 key.
inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_keys(mix_keys(a, b), c);
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return mix_keys(mix_keys(a, b, c), d);
}

}  // namespace moestress::detail
