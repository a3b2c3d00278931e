// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace eagle {

struct PairExample {
  std::string id;
  std::string text_a;
  std::string text_b;
  std::optional<int> label;  // 0 or 1 when present
  std::optional<std::string> domain;
};

/// Ordered pool of sentence pairs; iteration order equals file/generation
/// order.
struct PairDataset {
  std::string name;
  std::vector<PairExample> examples;

  size_t size() const { return examples.size(); }
  const PairExample* find(const std::string& id) const;
};

struct SearchQuery {
  std::string id;
  std::string text;
  std::optional<std::string> domain;
  std::optional<std::vector<std::string>> relevant;  // label ids
};

struct Label {
  std::string id;
  std::string text;
};

struct SearchDataset {
  std::vector<SearchQuery> queries;
  std::vector<Label> labels;
};

/// Ground-truth labels held out of a split. Only oracle annotators,
/// oracle samplers and the evaluator accept this type; everything else
/// cannot reach the withheld labels.
struct SealedPairTruth {
  std::unordered_map<std::string, int> labels;

  int require(const std::string& id) const;
};

struct SplitResult {
  PairDataset source_labeled;
  PairDataset target_unlabeled;  // labels removed
  SealedPairTruth sealed;        // id -> withheld label
};

/// Withheld relevance sets for search queries; same access discipline as
/// SealedPairTruth.
struct SealedSearchTruth {
  std::unordered_map<std::string, std::vector<std::string>> relevant;

  const std::vector<std::string>& require(const std::string& query_id) const;
};

/// The easiest / hardest example ids by base-model squared error; the same
/// rule the splitter applies, reusable on a test set for subset metrics.
struct ExtremePartition {
  std::vector<std::string> easy_ids;
  std::vector<std::string> hard_ids;
};

struct SyntheticSpec {
  size_t n_pairs = 0;
  size_t vocab_size = 320;
  double flip_fraction = 0.0;
  double overlap_threshold = 0.5;
  uint64_t seed = 1;
};

struct GenMeta {
  bool flipped = false;
  double overlap = 0.0;     // shared / max(|A|,|B|) over final token sets
  bool structured = false;  // flipped via a marker phrase (learnable)
};

struct SyntheticDataset {
  PairDataset data;
  std::unordered_map<std::string, GenMeta> meta;
};

PairDataset load_pair_dataset(const std::filesystem::path& path);
void save_pair_dataset(const PairDataset& ds, const std::filesystem::path& path);

SearchDataset load_search_dataset(const std::filesystem::path& queries_path,
                                  const std::filesystem::path& labels_path);
void save_search_dataset(const SearchDataset& ds,
                         const std::filesystem::path& queries_path,
                         const std::filesystem::path& labels_path);

SealedPairTruth load_sealed_truth(const std::filesystem::path& path);
void save_sealed_truth(const SealedPairTruth& truth,
                       const std::filesystem::path& path);

/// Ranks ids by squared error (base_score - label)^2 ascending, ties broken
/// by id, and returns the extreme ends: round(fraction*n) ids total, easy
/// half floor-rounded, hard side taking the remainder.
ExtremePartition extreme_partition(
    const std::vector<std::pair<std::string, double>>& id_errors,
    double fraction);

/// Removes the extreme-error examples into an unlabeled target pool with
/// their labels sealed; the middle of the error distribution stays as the
/// labeled source. base_scores maps example id to the base model's score.
SplitResult make_extreme_split(
    const PairDataset& dataset,
    const std::unordered_map<std::string, double>& base_scores,
    double target_fraction);

/// Token-sequence pair generator with controlled token overlap. The base
/// semantics of a pair is [overlap > threshold]; a planted
/// floor(flip_fraction*n) subset carries the negated label, realized by
/// marker tokens so that the flip structure is learnable and shared across
/// datasets generated from the same vocabulary. Deterministic per seed.
SyntheticDataset generate_synthetic_pairs(const SyntheticSpec& spec);

void save_synthetic_meta(const SyntheticDataset& ds,
                         const std::filesystem::path& path);

}  // namespace eagle
