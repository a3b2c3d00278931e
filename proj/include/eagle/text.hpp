// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace eagle {

inline constexpr uint32_t kHashBits = 18;
inline constexpr uint32_t kHashSpace = 1u << kHashBits;

/// Sparse hashed feature vector; entries sorted by index, indices unique.
struct FeatureVector {
  std::vector<std::pair<uint32_t, double>> entries;

  bool empty() const { return entries.empty(); }
  size_t size() const { return entries.size(); }
};

/// Lowercases, wraps the text in '#' boundary markers and hashes all
/// character n-grams for n in {3,4,5} into kHashSpace buckets with count
/// weights. "abc" -> the six grams of "#abc#"; text shorter than one
/// character yields an empty vector.
FeatureVector featurize(std::string_view text);

}  // namespace eagle
