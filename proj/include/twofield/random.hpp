#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace twofield {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// child seed = hash(master seed, module name, unit index)
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view module,
                                 std::uint64_t index) {
  std::uint64_t h = splitmix64(master ^ fnv1a64(module));
  return splitmix64(h + splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::string_view module,
                    std::uint64_t index) {
  return Rng(derive_seed(master, module, index));
}

}  // namespace twofield
