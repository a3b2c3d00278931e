// SPDX-License-Identifier: Apache-2.0

#include "eagle/text.hpp"

#include <algorithm>
#include <string>

#include "eagle/hashing.hpp"

namespace eagle {

FeatureVector featurize(std::string_view text) {
  std::string marked;
  marked.reserve(text.size() + 2);
  marked.push_back('#');
  for (char c : text) {
    marked.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                          : c);
  }
  marked.push_back('#');

  std::vector<std::pair<uint32_t, double>> counts;
  counts.reserve(3 * marked.size());
  for (size_t n = 3; n <= 5; ++n) {
    if (marked.size() < n) break;
    for (size_t i = 0; i + n <= marked.size(); ++i) {
      uint32_t idx = static_cast<uint32_t>(
          fnv1a64(std::string_view(marked).substr(i, n)) & (kHashSpace - 1));
      counts.emplace_back(idx, 1.0);
    }
  }

  std::sort(counts.begin(), counts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  FeatureVector out;
  out.entries.reserve(counts.size());
  for (const auto& [idx, w] : counts) {
    if (!out.entries.empty() && out.entries.back().first == idx) {
      out.entries.back().second += w;
    } else {
      out.entries.emplace_back(idx, w);
    }
  }
  return out;
}

}  // namespace eagle
