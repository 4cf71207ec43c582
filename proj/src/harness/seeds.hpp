#pragma once

#include <cstdint>

namespace dmrac::harness {

inline constexpr std::uint64_t kSaltNetwork = 1;
inline constexpr std::uint64_t kSaltTrainer = 2;
inline constexpr std::uint64_t kSaltUplink = 3;
inline constexpr std::uint64_t kSaltDownlink = 4;
inline constexpr std::uint64_t kSaltFault = 5;
inline constexpr std::uint64_t kSaltCloth = 16;  // plus the term index

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Independent stream seed for one consumer of a scenario seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

}  // namespace dmrac::harness
