// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace eagle {

/// splitmix64 finalizer. Used everywhere randomness must be reproducible
/// across platforms and standard-library versions.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_u64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

inline uint64_t hash_u64(uint64_t a, uint64_t b, uint64_t c) {
  return mix64(hash_u64(a, b) ^ mix64(c));
}

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [0, n). Modulo bias is ~n/2^64, irrelevant at our scales.
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  uint64_t state_;
};

/// In-place Fisher-Yates. std::shuffle is not used because its draws are
/// implementation-defined; this must reproduce bit-for-bit everywhere.
template <typename T>
void deterministic_shuffle(std::span<T> items, SplitMix64& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace eagle
