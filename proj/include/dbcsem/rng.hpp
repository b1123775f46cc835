#pragma once

#include <cstdint>
#include <initializer_list>

namespace dbcsem {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of tags,
/// e.g. derive_seed(seed, {kTagNoise, step, user}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

namespace seed_tag {
inline constexpr std::uint64_t kCsi = 1;
inline constexpr std::uint64_t kNoiseUser1 = 2;
inline constexpr std::uint64_t kNoiseUser2 = 3;
inline constexpr std::uint64_t kPerturb = 4;
inline constexpr std::uint64_t kPairs = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kEval = 7;
inline constexpr std::uint64_t kStepNoise = 8;
}  // namespace seed_tag

}  // namespace dbcsem
