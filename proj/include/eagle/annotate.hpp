// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"

namespace eagle {

struct AnnotationRecord {
  std::string id;
  std::optional<int> pair_label;                // pair mode
  std::map<std::string, int> search_assignment;  // search mode: label id -> 0/1
  std::string annotator;  // "gt" | "simulated(...)" | "llm(<model>)"
  std::optional<std::string> prompt;
  std::optional<std::string> response;
};

struct NoiseProfile {
  double default_accuracy = 1.0;
  /// 1-based quantile index -> accuracy. When set, every annotated id must
  /// resolve to a quantile and that quantile must be present here.
  std::map<int, double> per_quantile;
};

struct CandidateLabel {
  std::string id;
  std::string text;
  double score;
};

/// A query together with its filtered label set Y', ordered by descending
/// finetuned-model score.
struct SearchCandidates {
  std::string query_id;
  std::string query_text;
  std::vector<CandidateLabel> filtered;
};

std::vector<AnnotationRecord> annotate_gt_pairs(
    const std::vector<std::string>& ids, const SealedPairTruth& truth);

/// Ground-truth search oracle: within Y' the sealed relevance decides, every
/// label outside Y' is an implicit 0. A query whose relevant labels all fall
/// outside Y' gets an all-zero assignment.
std::vector<AnnotationRecord> annotate_gt_search(
    const std::vector<SearchCandidates>& items, const SealedSearchTruth& truth);

/// Noisy annotator: per id an independent Bernoulli draw keyed by
/// (seed, id) decides whether to emit the true label or the flipped one, so
/// results do not depend on input order.
std::vector<AnnotationRecord> annotate_simulated_pairs(
    const std::vector<std::string>& ids, const SealedPairTruth& truth,
    const NoiseProfile& profile,
    const std::unordered_map<std::string, int>& quantile_of, uint64_t seed);

/// Search-mode simulator mirrors the single-choice prompt protocol: a
/// correct draw picks the best relevant label in Y', a wrong draw picks
/// uniformly among the incorrect single-choice answers.
std::vector<AnnotationRecord> annotate_simulated_search(
    const std::vector<SearchCandidates>& items, const SealedSearchTruth& truth,
    const NoiseProfile& profile,
    const std::unordered_map<std::string, int>& quantile_of, uint64_t seed);

struct Prompt {
  std::string system;
  std::string user;
};

inline constexpr size_t kPairPromptBatch = 10;

/// Byte-exact pair-annotation prompt; 1..10 pairs, each slot filled with
/// "text_a\ntext_b". Shorter batches fill only the slots they need.
Prompt build_pair_prompt(std::span<const PairExample> batch);

struct PairParse {
  std::vector<int> labels;
  std::vector<std::string> warnings;
};

/// Extracts Pair<k> tokens; in-range ks become 1, everything else 0.
/// Out-of-range tokens are ignored with a warning; text with no tokens at
/// all parses to all zeros with a warning. Never throws.
PairParse parse_pair_response(std::string_view raw, size_t batch_size);

enum class SearchTemplate { wiki_usa, amazon_books, amazon_kitchen };

const char* search_template_name(SearchTemplate t);
SearchTemplate parse_search_template(const std::string& name);

struct PromptLabel {
  std::string text;
  double score;
};

/// Byte-exact search-annotation prompt; labels are rendered in descending
/// score order regardless of input order. 1..10 labels.
Prompt build_search_prompt(const std::string& query_text,
                           std::span<const PromptLabel> labels,
                           SearchTemplate tmpl);

struct SearchParse {
  std::optional<size_t> chosen;  // 0-based rank into Y'
  std::vector<std::string> warnings;
};

/// First in-range Product<k> / SeeAlsoArticle<k> token wins; none found
/// parses to no choice (all zeros) with a warning. Never throws.
SearchParse parse_search_response(std::string_view raw, size_t y_size);

/// Fraction of records whose assignment matches the sealed labels.
double annotation_agreement(const std::vector<AnnotationRecord>& records,
                            const SealedPairTruth& truth);

}  // namespace eagle
