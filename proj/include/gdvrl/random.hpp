#pragma once

// Stable hashing and keyed random streams. Streams are derived from string
// keys so results do not depend on scheduling order.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace gdvrl {

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) noexcept {
    for (unsigned char ch : bytes) {
      state_ ^= ch;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a& update(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (8 * i)) & 0xffU;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  /// Field separator, so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& separator() noexcept { return update(std::uint64_t{0x1f}); }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view bytes) noexcept { return Fnv1a{}.update(bytes).digest(); }

/// Generator seeded from a base seed plus an ordered list of string keys.
inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::initializer_list<std::string_view> keys) {
  Fnv1a h;
  h.update(seed);
  for (auto k : keys) h.separator().update(k);
  return std::mt19937_64(h.digest());
}

inline double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace gdvrl
