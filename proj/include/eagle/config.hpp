// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "eagle/annotate.hpp"
#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"
#include "eagle/llm_client.hpp"
#include "eagle/sampling.hpp"

namespace eagle {

/// Scalar or array value from the config file.
class TomlValue {
 public:
  using Array = std::vector<TomlValue>;
  using Storage = std::variant<bool, int64_t, double, std::string, Array>;

  TomlValue() : v_(int64_t{0}) {}
  explicit TomlValue(Storage v) : v_(std::move(v)) {}

  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_int() const { return std::holds_alternative<int64_t>(v_); }
  bool is_float() const { return std::holds_alternative<double>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }

  bool as_bool(const std::string& key) const;
  int64_t as_int(const std::string& key) const;
  double as_number(const std::string& key) const;  // int or float
  const std::string& as_string(const std::string& key) const;
  const Array& as_array(const std::string& key) const;

 private:
  Storage v_;
};

/// section -> key -> value; top-level keys live under section "".
using TomlDoc = std::map<std::string, std::map<std::string, TomlValue>>;

/// Parses the supported TOML subset: [section] headers, scalar and flat
/// array values, # comments.
TomlDoc parse_toml(const std::string& text, const std::string& what);
TomlDoc parse_toml_file(const std::filesystem::path& path);

/// Applies "section.key=value" (or "key=value") override strings.
void apply_overrides(TomlDoc& doc, const std::vector<std::string>& overrides);

enum class Task { pairs, search };
enum class AnnotatorKind { gt, simulated, llm };

const char* task_name(Task t);
const char* annotator_kind_name(AnnotatorKind k);

struct ExperimentConfig {
  Task task = Task::pairs;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::string output_dir;
  bool parallel_seeds = false;

  // data: synthetic generation or files
  bool use_synthetic = false;
  SyntheticSpec synth;
  size_t synth_test_pairs = 0;  // 0 -> n_pairs / 2
  double split_fraction = 0.6;
  std::string labeled_path;
  std::string pool_path;
  std::string truth_path;
  std::string test_path;
  std::string labels_path;
  std::string queries_path;
  std::string pool_queries_path;
  std::string test_queries_path;

  uint64_t base_seed = kDefaultBaseSeed;
  TrainConfig train;  // seed field replaced by per-run seeds

  Strategy strategy = Strategy::cond_informativeness;
  double budget_value = 0.1;
  bool budget_is_fraction = true;

  AnnotatorKind annotator = AnnotatorKind::simulated;
  NoiseProfile noise;
  LlmConfig llm;
  SearchTemplate search_template = SearchTemplate::amazon_books;
  size_t top_k = 10;
  size_t n_quantiles = 20;
};

ExperimentConfig experiment_config_from_toml(const TomlDoc& doc);
ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides);

/// Canonical digest: equal configs hash equal, any field change changes it.
std::string config_hash(const ExperimentConfig& config);

/// Fractional budgets floor against the pool size.
size_t resolve_budget(const ExperimentConfig& config, size_t pool_size);

}  // namespace eagle
