// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"

namespace eagle {

/// Per-input conditional informativeness: squared deviation between the
/// finetuned and base model scores, plus provenance of how it was computed.
struct DeviationScore {
  std::string id;
  double z = 0.0;        // (f_score - f0_score)^2
  double f_score = 0.0;
  double f0_score = 0.0;
  std::optional<std::string> anchor_label_id;  // search mode only
};

enum class Strategy {
  random,
  uncertainty,
  cond_informativeness,
  base_consistent,
  base_inconsistent,
  cond_informativeness_domain,
};

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct SamplingPlan {
  Strategy strategy = Strategy::cond_informativeness;
  size_t budget = 0;
  uint64_t seed = 1;
};

/// Bins ordered by descending z; bin 0 holds the highest-z items. Sizes
/// differ by at most one, larger bins first.
struct QuantilePartition {
  std::vector<std::vector<std::string>> bins;

  /// id -> 1-based bin index (bin 1 = highest z).
  std::unordered_map<std::string, int> index_of() const;
};

/// One deviation score per pool example, in pool order. Both scores come
/// from the same pair, z = (f - f0)^2.
std::vector<DeviationScore> deviation_scores_pairs(const EmbeddingModel& f,
                                                   const EmbeddingModel& f0,
                                                   const PairDataset& pool);

/// Search-mode deviation: the anchor label is the base model's nearest
/// label for the query, and z is the squared score gap on that single
/// (query, anchor) pair.
std::vector<DeviationScore> deviation_scores_search(
    const EmbeddingModel& f, const EmbeddingModel& f0,
    const std::vector<SearchQuery>& queries, const std::vector<Label>& corpus);

/// Ids of the B largest z, descending; ties broken by pool order.
std::vector<std::string> sample_top_b(const std::vector<DeviationScore>& scores,
                                      size_t budget);

/// Uniform without replacement; deterministic per seed.
std::vector<std::string> sample_random(const PairDataset& pool, size_t budget,
                                       uint64_t seed);
std::vector<std::string> sample_random(const std::vector<std::string>& pool_ids,
                                       size_t budget, uint64_t seed);

/// B pool examples whose finetuned scores are nearest 0.5.
std::vector<std::string> sample_uncertainty(const EmbeddingModel& f,
                                            const PairDataset& pool,
                                            size_t budget);

enum class BaseExtremeMode { consistent, inconsistent };

/// Oracle strategies: rank by squared error of the base score against the
/// sealed label; consistent takes the B lowest, inconsistent the B highest.
std::vector<std::string> sample_base_extreme(
    const PairDataset& pool, const SealedPairTruth& truth,
    const std::unordered_map<std::string, double>& f0_scores, size_t budget,
    BaseExtremeMode mode);

QuantilePartition quantile_partition(const std::vector<DeviationScore>& scores,
                                     size_t n_quantiles);

/// Domain-level sampling: domains picked greedily by descending mean z
/// until they can cover the budget, which is then spread uniformly over the
/// selected domains (remainder to higher-mean domains), taking items by
/// descending z within each domain.
std::vector<std::string> domain_sample(
    const std::vector<DeviationScore>& scores,
    const std::unordered_map<std::string, std::string>& domains, size_t budget);

/// CSV with header `id,z,f_score,f0_score,anchor_label_id,domain`.
std::string scores_to_csv(
    const std::vector<DeviationScore>& scores,
    const std::unordered_map<std::string, std::string>& domains);

}  // namespace eagle
