// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eagle/dataset.hpp"
#include "eagle/text.hpp"

namespace eagle {

inline constexpr int kEmbeddingDims = 64;

/// Seed of the stock base model. The base model is a fixed random
/// projection over hashed n-grams; with no finetuning it scores pairs by
/// (noisy) lexical overlap.
inline constexpr uint64_t kDefaultBaseSeed = 0xEA61E5EEDULL;

/// Amplitude of generated base projection rows. Sets the pre-normalization
/// vector scale and thereby the effective step size of finetuning at the
/// stock learning rate.
inline constexpr double kBaseRowScale = 0.001;

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 2;
  int batch_size = 32;
  // schedule is fixed: linear decay to zero over all steps
  uint64_t seed = 1;
};

std::string train_config_hash(const TrainConfig& config);

struct ProvenanceEntry {
  std::string kind;  // "base" | "finetuned"
  std::string id;
  std::string parent;             // empty for base
  std::string train_config_hash;  // empty for base
  uint64_t train_size = 0;
};

/// Linear projection from the 2^18-dim hashed feature space to a unit-norm
/// embedding space. Base rows are generated on demand from the seed; only
/// rows changed by training are stored explicitly.
class EmbeddingModel {
 public:
  static EmbeddingModel base(uint64_t seed = kDefaultBaseSeed,
                             int dims = kEmbeddingDims);

  int dims() const { return dims_; }
  uint64_t base_seed() const { return base_seed_; }
  const std::string& id() const;
  const std::vector<ProvenanceEntry>& provenance() const { return provenance_; }
  void append_provenance(ProvenanceEntry entry);

  /// Current projection row: the trained override if present, else the
  /// seeded base row.
  void row(uint32_t index, std::span<double> out) const;
  void set_row(uint32_t index, std::vector<double> values);
  const std::unordered_map<uint32_t, std::vector<double>>& overrides() const {
    return overrides_;
  }

  /// Pre-normalization projection of a feature vector.
  std::vector<double> project(const FeatureVector& features) const;

  /// Unit-norm embedding; throws EmptyEmbeddingError on empty features or a
  /// zero projection.
  std::vector<double> embed(const FeatureVector& features) const;
  std::vector<double> embed(std::string_view text) const;

  /// Dot product of unit embeddings, in [-1, 1]; symmetric.
  double similarity(std::string_view a, std::string_view b) const;
  double similarity(const FeatureVector& a, const FeatureVector& b) const;

  /// Bit-exact parameter comparison (dims, seed and all override rows).
  bool params_equal(const EmbeddingModel& other) const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingModel load(const std::filesystem::path& path);

 private:
  int dims_ = kEmbeddingDims;
  uint64_t base_seed_ = kDefaultBaseSeed;
  std::vector<ProvenanceEntry> provenance_;
  std::unordered_map<uint32_t, std::vector<double>> overrides_;
};

using GradMap = std::unordered_map<uint32_t, std::vector<double>>;

/// Accumulates weight * d/dP (similarity(a,b) - target)^2 into grad,
/// including the Jacobian of the L2 normalization, and returns the squared
/// error. This is the trainer's inner step, exposed for gradient checks.
double pair_loss_accumulate(const EmbeddingModel& model,
                            const FeatureVector& a, const FeatureVector& b,
                            double target, double weight, GradMap& grad);

/// Mini-batch SGD on mean squared error between similarity scores and
/// binary labels, learning rate decaying linearly to zero. Returns a new
/// model; `base` is untouched. Deterministic per config seed.
EmbeddingModel train(const EmbeddingModel& base, const PairDataset& data,
                     const TrainConfig& config);

double dataset_mse(const EmbeddingModel& model, const PairDataset& data);

struct ScoredLabel {
  std::string id;
  double score;
};

/// Exhaustive top-K labels by similarity, descending, ties by label id.
std::vector<ScoredLabel> nearest_labels(const EmbeddingModel& model,
                                        std::string_view query,
                                        const std::vector<Label>& corpus,
                                        size_t k);

/// Corpus embedded once for repeated queries; same ranking contract as
/// nearest_labels.
class LabelIndex {
 public:
  LabelIndex(const EmbeddingModel& model, const std::vector<Label>& corpus);

  std::vector<ScoredLabel> top_k(std::span<const double> query_embedding,
                                 size_t k) const;
  size_t size() const { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> embeddings_;
};

}  // namespace eagle
