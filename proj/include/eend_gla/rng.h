// eend_gla/rng.h

#ifndef EEND_GLA_RNG_H_
#define EEND_GLA_RNG_H_

#include <cstdint>
#include <initializer_list>

namespace eend_gla {

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive mix of several integers into one generator seed.
inline std::uint64_t HashSeed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto p : parts) h = SplitMix64(h ^ SplitMix64(p));
  return h;
}

template <typename... Ts>
std::uint64_t HashSeed(Ts... parts) {
  return HashSeed({static_cast<std::uint64_t>(parts)...});
}

}  // namespace eend_gla

#endif  // EEND_GLA_RNG_H_
