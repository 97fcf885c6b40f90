#pragma once

// Deterministic randomness shared by every module.
//
// The generator is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are *not* portable, so bounded draws and
// shuffles are implemented here with a documented procedure:
//
//   bounded(g, n):  limit = 2^64 - (2^64 mod n); draw x = g() until x < limit;
//                   return x mod n.
//   partial shuffle (forward Fisher-Yates) of a[0..m) taking n items:
//                   for i in [0, n): j = i + bounded(g, m - i); swap(a[i], a[j])
//                   result = a[0..n)
//
// Any implementation following these steps reproduces the same samples.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace polyglot {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over bytes; only used to fold short labels into seeds.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives a child seed from a parent seed and an ordered list of components.
/// derive_seed(s, {a, b}) = mix64(mix64(s ^ mix64(a)) ^ mix64(b)) ...
inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(parent);
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Uniform integer in [0, n) by rejection; n must be > 0.
inline std::uint64_t bounded(Rng& g, std::uint64_t n) {
  // 2^64 mod n computed as (2^64 - n) mod n
  const std::uint64_t rem = (0 - n) % n;
  const std::uint64_t limit = 0 - rem;  // wraps to 0 when rem == 0
  for (;;) {
    const std::uint64_t x = g();
    if (rem == 0 || x < limit) return x % n;
  }
}

/// Forward partial Fisher-Yates; returns the first n items of the shuffle.
template <class T>
std::vector<T> partial_shuffle(std::vector<T> items, std::size_t n, Rng& g) {
  const std::size_t m = items.size();
  for (std::size_t i = 0; i < n && i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(g, m - i));
    std::swap(items[i], items[j]);
  }
  items.resize(std::min(n, m));
  return items;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

}  // namespace polyglot
