// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eagle/config.hpp"
#include "eagle/eval.hpp"
#include "eagle/llm_client.hpp"

namespace eagle {

struct SeedOutcome {
  uint64_t seed = 0;
  bool ok = true;
  std::string error;  // stage-tagged when !ok
  std::map<std::string, double> baseline;   // metric key -> value
  std::map<std::string, double> augmented;  // empty when the seed failed
  std::vector<std::string> selected_ids;
  std::optional<double> agreement;  // vs sealed truth, when available
  std::vector<std::string> warnings;
  std::vector<AnnotationRecord> annotations;
  std::string augmented_model_id;
  std::string augmented_parent;
  std::string augmented_train_config_hash;
  uint64_t augmented_train_size = 0;
};

struct RunReport {
  std::string config_digest;
  std::string task;
  std::string strategy;
  std::string annotator;
  size_t pool_size = 0;
  size_t budget = 0;
  std::vector<SeedOutcome> seeds;
  // "baseline/<metric>" and "augmented/<metric>" over succeeding seeds
  std::map<std::string, MeanStderr> aggregate;
  bool partial = false;   // some seeds failed
  bool failed = false;    // all seeds failed
  double wall_seconds = 0.0;
};

/// Canonical JSON body; timing is appended only on request so reports stay
/// byte-comparable across reruns.
std::string report_to_json(const RunReport& report, bool include_timing);
std::string report_metrics_csv(const RunReport& report);
std::string annotations_to_jsonl(const RunReport& report);
std::string selected_ids_text(const RunReport& report);

/// The EAGLE loop: finetune on L, score and sample the pool, annotate the
/// selection, retrain from the base model on L plus the annotations, and
/// evaluate baseline and augmented models per seed. transport may inject a
/// fake LLM endpoint (tests); null uses HTTP.
RunReport run_eagle(const ExperimentConfig& config,
                    ChatTransport* transport = nullptr);

/// Writes report.json, metrics.csv, selected_ids.txt and annotations.jsonl
/// under config.output_dir.
void write_run_outputs(const RunReport& report, const ExperimentConfig& config);

struct MotivationRow {
  std::string arm;
  // "auc", "auc:high-base-error", "auc:low-base-error"
  std::map<std::string, MeanStderr> metrics;
  std::map<std::string, std::vector<double>> per_seed;
};

struct MotivationReport {
  std::string config_digest;
  std::vector<MotivationRow> rows;  // init, 100%, then the four strategies
  bool partial = false;
  double wall_seconds = 0.0;
};

/// The domain-adaptation study: extreme split, then one arm per sampling
/// strategy plus the no-augmentation and full-augmentation arms. Expects a
/// fully labeled dataset (synthetic or data.labeled) and writes the split
/// files under output_dir.
MotivationReport run_motivation(const ExperimentConfig& config,
                                ChatTransport* transport = nullptr);

std::string motivation_to_json(const MotivationReport& report,
                               bool include_timing);
std::string motivation_metrics_csv(const MotivationReport& report);
void write_motivation_outputs(const MotivationReport& report,
                              const ExperimentConfig& config);

struct QuantileReport {
  std::string config_digest;
  size_t n_quantiles = 0;
  std::vector<QuantileGainRow> rows;
  double wall_seconds = 0.0;
};

/// Deviation-quantile gain analysis over the pool; the partition comes from
/// the first seed's finetuned model.
QuantileReport run_quantiles(const ExperimentConfig& config,
                             size_t n_quantiles,
                             ChatTransport* transport = nullptr);

std::string quantiles_to_json(const QuantileReport& report,
                              bool include_timing);
std::string quantiles_csv(const QuantileReport& report);
void write_quantile_outputs(const QuantileReport& report,
                            const ExperimentConfig& config);

}  // namespace eagle
