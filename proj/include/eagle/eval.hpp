// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eagle/annotate.hpp"
#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"
#include "eagle/sampling.hpp"

namespace eagle {

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::optional<double> stderr_;
  std::optional<std::string> subset;
  size_t n = 0;
};

/// Mann-Whitney AUC with midrank tie handling: the probability that a
/// random positive outranks a random negative, ties counted 1/2. Equals the
/// O(P*N) pair-counting definition.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of queries whose top-1 label is in their relevance set.
/// Queries without a (nonempty) relevance set are excluded; all excluded is
/// an error. n in the report counts evaluated queries.
MetricReport precision_at_1(const EmbeddingModel& model,
                            const SearchDataset& data);

enum class SubsetKind { all, high_base_error, low_base_error, domain };

struct SubsetSpec {
  SubsetKind kind = SubsetKind::all;
  std::string domain;
};

std::string subset_tag(const SubsetSpec& spec);

struct EvalExample {
  std::string id;
  double score = 0.0;
  int label = 0;
  std::optional<std::string> domain;
};

/// AUC restricted to a subset; high/low-base-error subsets come from the
/// extreme-split rule applied to the same examples' base errors.
MetricReport subset_auc(const std::vector<EvalExample>& examples,
                        const ExtremePartition& extremes,
                        const SubsetSpec& spec);

/// Per-seed training context for the quantile-gain analysis.
struct QuantileGainContext {
  const PairDataset* labeled = nullptr;
  const PairDataset* pool = nullptr;  // unlabeled texts
  const PairDataset* test = nullptr;  // labeled
  const EmbeddingModel* base = nullptr;
  TrainConfig train_config;
  std::vector<uint64_t> seeds;
};

/// annotator(ids, seed) -> records with pair labels for those ids.
using AnnotatorFn = std::function<std::vector<AnnotationRecord>(
    const std::vector<std::string>&, uint64_t)>;

struct QuantileGainRow {
  int bin = 0;  // 1-based; bin 1 = highest deviation
  size_t size = 0;
  double mean_gain = 0.0;
  double stderr_ = 0.0;
  std::vector<double> per_seed;
};

/// For each bin independently: retrain on labeled + annotate(bin) from the
/// base model and report test AUC minus the per-seed baseline (trained on
/// labeled alone, shared across bins).
std::vector<QuantileGainRow> quantile_gain_analysis(
    const QuantileGainContext& ctx, const QuantilePartition& partition,
    const AnnotatorFn& annotator);

struct QuantileAccuracyRow {
  int bin = 0;
  size_t n = 0;  // annotated ids in this bin
  std::optional<double> annotator_acc;
  std::optional<double> base_acc;
  std::optional<double> finetuned_acc;
};

/// Per bin: agreement of annotations with sealed truth, next to base and
/// finetuned model accuracy (score thresholded at 0.5) on the same ids.
std::vector<QuantileAccuracyRow> annotator_accuracy_by_quantile(
    const std::vector<AnnotationRecord>& records, const SealedPairTruth& truth,
    const QuantilePartition& partition,
    const std::unordered_map<std::string, double>& base_scores,
    const std::unordered_map<std::string, double>& finetuned_scores);

/// Spearman rank correlation with midranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Sample standard deviation over sqrt(n); 0 for n < 2.
MeanStderr mean_stderr(std::span<const double> values);

/// Test AUC of a model over a labeled pair dataset.
double evaluate_auc(const EmbeddingModel& model, const PairDataset& test);

}  // namespace eagle
