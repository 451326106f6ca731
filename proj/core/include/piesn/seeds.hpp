#pragma once

#include <cstdint>
#include <string_view>

namespace piesn {

// splitmix64; stable across platforms, unlike std::hash.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Expands a master seed into independent per-purpose streams so that e.g.
// reservoir weights and measurement noise can be varied separately.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(master);
  for (char c : purpose) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  }
  return splitmix64(h ^ index);
}

}  // namespace piesn
