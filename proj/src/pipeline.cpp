// SPDX-License-Identifier: Apache-2.0

#include "eagle/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/errors.hpp"
#include "eagle/hashing.hpp"
#include "eagle/io.hpp"
#include "eagle/parallel.hpp"
#include "eagle/rng.hpp"

namespace eagle {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr uint64_t kTestSetSalt = 0x7e57ULL;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::unordered_map<std::string, double> score_pairs(const EmbeddingModel& model,
                                                    const PairDataset& data) {
  std::unordered_map<std::string, double> scores;
  scores.reserve(data.size());
  for (const auto& ex : data.examples) {
    scores[ex.id] = model.similarity(ex.text_a, ex.text_b);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// pairs task
// ---------------------------------------------------------------------------

struct PairsData {
  PairDataset labeled;
  PairDataset pool;
  PairDataset test;
  SealedPairTruth sealed;
  bool has_truth = false;
  ExtremePartition test_extremes;
  std::unordered_map<std::string, double> pool_f0_scores;
  std::unordered_map<std::string, std::string> pool_domains;
  std::unordered_map<std::string, const PairExample*> pool_index;
};

void finish_pairs_data(PairsData& data, const EmbeddingModel& f0,
                       double split_fraction) {
  data.pool_f0_scores = score_pairs(f0, data.pool);
  for (const auto& ex : data.pool.examples) {
    if (ex.domain) data.pool_domains[ex.id] = *ex.domain;
    data.pool_index[ex.id] = &ex;
  }
  std::vector<std::pair<std::string, double>> test_errors;
  test_errors.reserve(data.test.size());
  auto test_scores = score_pairs(f0, data.test);
  for (const auto& ex : data.test.examples) {
    if (!ex.label) {
      throw ConfigError("test example " + ex.id + " is unlabeled");
    }
    double e = test_scores[ex.id] - static_cast<double>(*ex.label);
    test_errors.emplace_back(ex.id, e * e);
  }
  data.test_extremes = extreme_partition(test_errors, split_fraction);
}

PairsData materialize_pairs(const ExperimentConfig& cfg,
                            const EmbeddingModel& f0) {
  PairsData data;
  if (cfg.use_synthetic) {
    SyntheticDataset full = generate_synthetic_pairs(cfg.synth);
    SyntheticSpec test_spec = cfg.synth;
    test_spec.seed = hash_u64(cfg.synth.seed, kTestSetSalt);
    test_spec.n_pairs =
        cfg.synth_test_pairs > 0 ? cfg.synth_test_pairs : cfg.synth.n_pairs / 2;
    SyntheticDataset test = generate_synthetic_pairs(test_spec);

    SplitResult split = make_extreme_split(
        full.data, score_pairs(f0, full.data), cfg.split_fraction);
    data.labeled = std::move(split.source_labeled);
    data.pool = std::move(split.target_unlabeled);
    data.sealed = std::move(split.sealed);
    data.has_truth = true;
    data.test = std::move(test.data);
  } else {
    if (cfg.labeled_path.empty() || cfg.pool_path.empty() ||
        cfg.test_path.empty()) {
      throw ConfigError(
          "pairs task needs data.labeled, data.pool and data.test (or a "
          "[synthetic] section)");
    }
    data.labeled = load_pair_dataset(cfg.labeled_path);
    data.pool = load_pair_dataset(cfg.pool_path);
    for (const auto& ex : data.pool.examples) {
      if (ex.label) {
        throw ConfigError("pool example " + ex.id +
                          " carries a label; pool files must be unlabeled");
      }
    }
    data.test = load_pair_dataset(cfg.test_path);
    if (!cfg.truth_path.empty()) {
      data.sealed = load_sealed_truth(cfg.truth_path);
      data.has_truth = true;
    }
  }
  for (const auto& ex : data.labeled.examples) {
    if (!ex.label) {
      throw ConfigError("labeled example " + ex.id + " has no label");
    }
  }
  finish_pairs_data(data, f0, cfg.split_fraction);
  return data;
}

std::map<std::string, double> evaluate_pairs_model(
    const EmbeddingModel& model, const PairsData& data) {
  std::vector<EvalExample> examples;
  examples.reserve(data.test.size());
  for (const auto& ex : data.test.examples) {
    EvalExample e;
    e.id = ex.id;
    e.score = model.similarity(ex.text_a, ex.text_b);
    e.label = *ex.label;
    e.domain = ex.domain;
    examples.push_back(std::move(e));
  }
  std::map<std::string, double> metrics;
  metrics["auc"] =
      subset_auc(examples, data.test_extremes, {SubsetKind::all, ""}).value;
  for (SubsetKind kind :
       {SubsetKind::high_base_error, SubsetKind::low_base_error}) {
    try {
      MetricReport r = subset_auc(examples, data.test_extremes, {kind, ""});
      metrics["auc:" + *r.subset] = r.value;
    } catch (const UndefinedMetricError&) {
      // empty extreme slice (split fraction 0) or single-class subset
    }
  }
  return metrics;
}

std::vector<std::string> select_pairs(Strategy strategy, const PairsData& data,
                                      const EmbeddingModel& f,
                                      const EmbeddingModel& f0, size_t budget,
                                      uint64_t seed,
                                      std::vector<DeviationScore>& scores_cache) {
  auto deviation_scores = [&]() -> const std::vector<DeviationScore>& {
    if (scores_cache.empty()) {
      scores_cache = deviation_scores_pairs(f, f0, data.pool);
    }
    return scores_cache;
  };
  switch (strategy) {
    case Strategy::random:
      return sample_random(data.pool, budget, seed);
    case Strategy::uncertainty:
      return sample_uncertainty(f, data.pool, budget);
    case Strategy::cond_informativeness:
      return sample_top_b(deviation_scores(), budget);
    case Strategy::cond_informativeness_domain:
      return domain_sample(deviation_scores(), data.pool_domains, budget);
    case Strategy::base_consistent:
    case Strategy::base_inconsistent:
      if (!data.has_truth) {
        throw ConfigError(std::string(strategy_name(strategy)) +
                          " is an oracle strategy and needs sealed truth");
      }
      return sample_base_extreme(data.pool, data.sealed, data.pool_f0_scores,
                                 budget,
                                 strategy == Strategy::base_consistent
                                     ? BaseExtremeMode::consistent
                                     : BaseExtremeMode::inconsistent);
  }
  throw ConfigError("unhandled strategy");
}

LlmConfig llm_config_for_seed(const ExperimentConfig& cfg, uint64_t seed) {
  LlmConfig llm = cfg.llm;
  if (cfg.parallel_seeds && !llm.cache_dir.empty()) {
    llm.cache_dir /= "seed-" + std::to_string(seed);
  }
  return llm;
}

std::vector<AnnotationRecord> annotate_pairs_selection(
    const ExperimentConfig& cfg, const PairsData& data,
    const std::vector<std::string>& selected,
    const std::vector<DeviationScore>& pool_scores, uint64_t seed,
    ChatTransport* transport) {
  switch (cfg.annotator) {
    case AnnotatorKind::gt:
      if (!data.has_truth) {
        throw ConfigError("gt annotator needs sealed truth");
      }
      return annotate_gt_pairs(selected, data.sealed);
    case AnnotatorKind::simulated: {
      if (!data.has_truth) {
        throw ConfigError("simulated annotator needs sealed truth");
      }
      std::unordered_map<std::string, int> quantile_of;
      if (!cfg.noise.per_quantile.empty()) {
        quantile_of =
            quantile_partition(pool_scores, cfg.n_quantiles).index_of();
      }
      return annotate_simulated_pairs(selected, data.sealed, cfg.noise,
                                      quantile_of, seed);
    }
    case AnnotatorKind::llm: {
      std::vector<PairExample> examples;
      examples.reserve(selected.size());
      for (const auto& id : selected) {
        auto it = data.pool_index.find(id);
        if (it == data.pool_index.end()) {
          throw Error("selected id not in pool: " + id);
        }
        examples.push_back(*it->second);
      }
      static HttpChatTransport http_transport;
      return annotate_llm_pairs(examples, llm_config_for_seed(cfg, seed),
                                transport ? transport : &http_transport);
    }
  }
  throw ConfigError("unhandled annotator kind");
}

PairDataset augment_labeled(const PairsData& data,
                            const std::vector<AnnotationRecord>& records) {
  PairDataset augmented;
  augmented.name = data.labeled.name + "+annotated";
  augmented.examples = data.labeled.examples;
  for (const auto& rec : records) {
    auto it = data.pool_index.find(rec.id);
    if (it == data.pool_index.end()) {
      throw Error("annotated id not in pool: " + rec.id);
    }
    if (!rec.pair_label) {
      throw Error("annotation for " + rec.id + " carries no pair label");
    }
    PairExample ex = *it->second;
    ex.label = *rec.pair_label;
    augmented.examples.push_back(std::move(ex));
  }
  return augmented;
}

SeedOutcome run_pairs_seed(const ExperimentConfig& cfg, const PairsData& data,
                           const EmbeddingModel& f0, uint64_t seed,
                           size_t budget, ChatTransport* transport) {
  SeedOutcome out;
  out.seed = seed;
  std::string stage = "train-baseline";
  try {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    EmbeddingModel f = train(f0, data.labeled, tc);
    stage = "evaluate-baseline";
    out.baseline = evaluate_pairs_model(f, data);

    stage = "sample";
    std::vector<DeviationScore> scores_cache;
    out.selected_ids = select_pairs(cfg.strategy, data, f, f0, budget,
                                    seed, scores_cache);
    if (!cfg.noise.per_quantile.empty() && scores_cache.empty()) {
      scores_cache = deviation_scores_pairs(f, f0, data.pool);
    }

    stage = "annotate";
    out.annotations = annotate_pairs_selection(cfg, data, out.selected_ids,
                                               scores_cache, seed, transport);
    if (data.has_truth && !out.annotations.empty()) {
      out.agreement = annotation_agreement(out.annotations, data.sealed);
    }

    stage = "retrain";
    PairDataset augmented = augment_labeled(data, out.annotations);
    EmbeddingModel model = train(f0, augmented, tc);
    const ProvenanceEntry& prov = model.provenance().back();
    out.augmented_model_id = prov.id;
    out.augmented_parent = prov.parent;
    out.augmented_train_config_hash = prov.train_config_hash;
    out.augmented_train_size = prov.train_size;

    stage = "evaluate";
    out.augmented = evaluate_pairs_model(model, data);
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = stage + ": " + e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// search task
// ---------------------------------------------------------------------------

struct SearchData {
  std::vector<Label> corpus;
  std::vector<SearchQuery> labeled_queries;
  std::vector<SearchQuery> pool_queries;  // relevance stripped
  SealedSearchTruth sealed;
  bool has_truth = false;
  SearchDataset test;
  std::unordered_map<std::string, std::string> pool_domains;
  std::unordered_map<std::string, const Label*> label_by_id;
  std::unordered_map<std::string, const SearchQuery*> pool_query_index;
};

SearchData materialize_search(const ExperimentConfig& cfg) {
  if (cfg.labels_path.empty() || cfg.queries_path.empty() ||
      cfg.pool_queries_path.empty() || cfg.test_queries_path.empty()) {
    throw ConfigError(
        "search task needs data.labels, data.queries, data.pool_queries and "
        "data.test_queries");
  }
  SearchData data;
  SearchDataset labeled = load_search_dataset(cfg.queries_path, cfg.labels_path);
  data.corpus = labeled.labels;
  data.labeled_queries = labeled.queries;
  for (const auto& q : data.labeled_queries) {
    if (!q.relevant || q.relevant->empty()) {
      throw ConfigError("labeled query " + q.id + " has no relevance set");
    }
  }

  SearchDataset pool =
      load_search_dataset(cfg.pool_queries_path, cfg.labels_path);
  for (auto& q : pool.queries) {
    if (q.relevant) {
      data.sealed.relevant[q.id] = *q.relevant;
      q.relevant.reset();
      data.has_truth = true;
    }
    if (q.domain) data.pool_domains[q.id] = *q.domain;
  }
  data.pool_queries = std::move(pool.queries);

  data.test = load_search_dataset(cfg.test_queries_path, cfg.labels_path);

  for (const auto& label : data.corpus) {
    data.label_by_id[label.id] = &label;
  }
  for (const auto& q : data.pool_queries) {
    data.pool_query_index[q.id] = &q;
  }
  return data;
}

/// Positive pairs from relevance sets plus an equal number of seeded
/// negatives; the reference trainer consumes plain labeled pairs.
PairDataset search_training_pairs(const std::vector<SearchQuery>& queries,
                                  const SearchData& data,
                                  const std::string& name) {
  PairDataset out;
  out.name = name;
  for (const auto& q : queries) {
    if (!q.relevant) continue;
    std::set<std::string> relevant(q.relevant->begin(), q.relevant->end());
    for (const auto& rid : *q.relevant) {
      auto it = data.label_by_id.find(rid);
      if (it == data.label_by_id.end()) {
        throw Error("query " + q.id + ": relevant label id \"" + rid +
                    "\" unknown");
      }
      out.examples.push_back(
          {q.id + "#" + rid, q.text, it->second->text, 1, q.domain});
    }
    SplitMix64 rng(hash_u64(fnv1a64(q.id), 0x4e6aULL));
    std::set<size_t> used;
    size_t wanted = q.relevant->size();
    size_t guard = 0;
    while (used.size() < wanted && guard++ < 200 * wanted) {
      size_t pick = static_cast<size_t>(rng.next_below(data.corpus.size()));
      if (relevant.count(data.corpus[pick].id) || !used.insert(pick).second) {
        continue;
      }
      out.examples.push_back({q.id + "#neg" + std::to_string(used.size()),
                              q.text, data.corpus[pick].text, 0, q.domain});
    }
  }
  return out;
}

std::map<std::string, double> evaluate_search_model(const EmbeddingModel& model,
                                                    const SearchData& data) {
  std::map<std::string, double> metrics;
  metrics["p_at_1"] = precision_at_1(model, data.test).value;

  std::set<std::string> tags;
  for (const auto& q : data.test.queries) {
    if (q.domain) tags.insert(*q.domain);
  }
  for (const auto& tag : tags) {
    SearchDataset restricted;
    restricted.labels = data.test.labels;
    for (const auto& q : data.test.queries) {
      if (q.domain && *q.domain == tag) restricted.queries.push_back(q);
    }
    try {
      metrics["p_at_1:domain=" + tag] =
          precision_at_1(model, restricted).value;
    } catch (const UndefinedMetricError&) {
    }
  }
  return metrics;
}

std::vector<SearchCandidates> filter_top_k(const EmbeddingModel& f,
                                           const SearchData& data,
                                           const std::vector<std::string>& ids,
                                           size_t top_k) {
  LabelIndex index(f, data.corpus);
  std::vector<SearchCandidates> items;
  items.reserve(ids.size());
  for (const auto& id : ids) {
    auto qit = data.pool_query_index.find(id);
    if (qit == data.pool_query_index.end()) {
      throw Error("selected id not in pool: " + id);
    }
    const SearchQuery& q = *qit->second;
    SearchCandidates item;
    item.query_id = q.id;
    item.query_text = q.text;
    for (const auto& scored : index.top_k(f.embed(q.text), top_k)) {
      item.filtered.push_back(
          {scored.id, data.label_by_id.at(scored.id)->text, scored.score});
    }
    items.push_back(std::move(item));
  }
  return items;
}

SeedOutcome run_search_seed(const ExperimentConfig& cfg, const SearchData& data,
                            const EmbeddingModel& f0, uint64_t seed,
                            size_t budget, ChatTransport* transport) {
  SeedOutcome out;
  out.seed = seed;
  std::string stage = "train-baseline";
  try {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    PairDataset labeled_pairs =
        search_training_pairs(data.labeled_queries, data, "search-labeled");
    EmbeddingModel f = train(f0, labeled_pairs, tc);
    stage = "evaluate-baseline";
    out.baseline = evaluate_search_model(f, data);

    stage = "sample";
    std::vector<std::string> pool_ids;
    pool_ids.reserve(data.pool_queries.size());
    for (const auto& q : data.pool_queries) pool_ids.push_back(q.id);

    switch (cfg.strategy) {
      case Strategy::random:
        out.selected_ids = sample_random(pool_ids, budget, seed);
        break;
      case Strategy::cond_informativeness: {
        auto scores =
            deviation_scores_search(f, f0, data.pool_queries, data.corpus);
        out.selected_ids = sample_top_b(scores, budget);
        break;
      }
      case Strategy::cond_informativeness_domain: {
        auto scores =
            deviation_scores_search(f, f0, data.pool_queries, data.corpus);
        out.selected_ids = domain_sample(scores, data.pool_domains, budget);
        break;
      }
      default:
        throw ConfigError(
            std::string(strategy_name(cfg.strategy)) +
            " is not defined for the search task (use random or "
            "cond-informativeness[-domain])");
    }

    stage = "annotate";
    std::vector<SearchCandidates> items =
        filter_top_k(f, data, out.selected_ids, cfg.top_k);
    switch (cfg.annotator) {
      case AnnotatorKind::gt:
        if (!data.has_truth) {
          throw ConfigError("gt annotator needs sealed truth");
        }
        out.annotations = annotate_gt_search(items, data.sealed);
        break;
      case AnnotatorKind::simulated:
        if (!data.has_truth) {
          throw ConfigError("simulated annotator needs sealed truth");
        }
        out.annotations = annotate_simulated_search(items, data.sealed,
                                                    cfg.noise, {}, seed);
        break;
      case AnnotatorKind::llm: {
        static HttpChatTransport http_transport;
        out.annotations = annotate_llm_search(
            items, cfg.search_template, llm_config_for_seed(cfg, seed),
            transport ? transport : &http_transport);
        break;
      }
    }

    stage = "retrain";
    PairDataset augmented = labeled_pairs;
    augmented.name += "+annotated";
    for (const auto& rec : out.annotations) {
      const SearchQuery& q = *data.pool_query_index.at(rec.id);
      for (const auto& [label_id, value] : rec.search_assignment) {
        augmented.examples.push_back({rec.id + "#" + label_id, q.text,
                                      data.label_by_id.at(label_id)->text,
                                      value, q.domain});
      }
    }
    EmbeddingModel model = train(f0, augmented, tc);
    const ProvenanceEntry& prov = model.provenance().back();
    out.augmented_model_id = prov.id;
    out.augmented_parent = prov.parent;
    out.augmented_train_config_hash = prov.train_config_hash;
    out.augmented_train_size = prov.train_size;

    stage = "evaluate";
    out.augmented = evaluate_search_model(model, data);
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = stage + ": " + e.what();
  }
  return out;
}

void aggregate_outcomes(RunReport& report) {
  std::vector<const SeedOutcome*> ok;
  for (const auto& seed : report.seeds) {
    if (seed.ok) ok.push_back(&seed);
  }
  report.partial = !ok.empty() && ok.size() < report.seeds.size();
  report.failed = ok.empty();
  if (ok.empty()) return;

  auto collect = [&](const char* phase,
                     const std::map<std::string, double> SeedOutcome::*field) {
    for (const auto& [key, _] : (*ok.front()).*field) {
      std::vector<double> values;
      for (const SeedOutcome* seed : ok) {
        auto it = (seed->*field).find(key);
        if (it != (seed->*field).end()) values.push_back(it->second);
      }
      if (values.size() == ok.size()) {
        report.aggregate[std::string(phase) + "/" + key] =
            mean_stderr(values);
      }
    }
  };
  collect("baseline", &SeedOutcome::baseline);
  collect("augmented", &SeedOutcome::augmented);
}

}  // namespace

RunReport run_eagle(const ExperimentConfig& cfg, ChatTransport* transport) {
  auto start = Clock::now();
  RunReport report;
  report.config_digest = config_hash(cfg);
  report.task = task_name(cfg.task);
  report.strategy = strategy_name(cfg.strategy);
  report.annotator = annotator_kind_name(cfg.annotator);

  EmbeddingModel f0 = EmbeddingModel::base(cfg.base_seed);
  report.seeds.resize(cfg.seeds.size());

  if (cfg.task == Task::pairs) {
    PairsData data = materialize_pairs(cfg, f0);
    report.pool_size = data.pool.size();
    report.budget = resolve_budget(cfg, report.pool_size);
    run_bounded(cfg.seeds.size(), cfg.parallel_seeds ? cfg.seeds.size() : 1,
                [&](size_t i) {
                  report.seeds[i] = run_pairs_seed(
                      cfg, data, f0, cfg.seeds[i], report.budget, transport);
                });
  } else {
    SearchData data = materialize_search(cfg);
    report.pool_size = data.pool_queries.size();
    report.budget = resolve_budget(cfg, report.pool_size);
    run_bounded(cfg.seeds.size(), cfg.parallel_seeds ? cfg.seeds.size() : 1,
                [&](size_t i) {
                  report.seeds[i] = run_search_seed(
                      cfg, data, f0, cfg.seeds[i], report.budget, transport);
                });
  }

  aggregate_outcomes(report);
  report.wall_seconds = elapsed_seconds(start);
  return report;
}

namespace {

json outcome_to_json(const SeedOutcome& seed) {
  json j;
  j["seed"] = seed.seed;
  j["ok"] = seed.ok;
  if (!seed.ok) j["error"] = seed.error;
  j["baseline"] = seed.baseline;
  j["augmented"] = seed.augmented;
  j["selected_ids"] = seed.selected_ids;
  if (seed.agreement) j["annotation_agreement"] = *seed.agreement;
  j["warnings"] = seed.warnings;
  if (!seed.augmented_model_id.empty()) {
    j["augmented_model"] = {
        {"id", seed.augmented_model_id},
        {"finetuned_from", seed.augmented_parent},
        {"train_config_hash", seed.augmented_train_config_hash},
        {"train_size", seed.augmented_train_size}};
  }
  return j;
}

json aggregate_to_json(const std::map<std::string, MeanStderr>& aggregate) {
  json j = json::object();
  for (const auto& [key, ms] : aggregate) {
    j[key] = {{"mean", ms.mean}, {"stderr", ms.stderr_}};
  }
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& report, bool include_timing) {
  json j;
  j["config"] = report.config_digest;
  j["task"] = report.task;
  j["strategy"] = report.strategy;
  j["annotator"] = report.annotator;
  j["pool_size"] = report.pool_size;
  j["budget"] = report.budget;
  j["partial"] = report.partial;
  j["failed"] = report.failed;
  json seeds = json::array();
  for (const auto& seed : report.seeds) {
    seeds.push_back(outcome_to_json(seed));
  }
  j["seeds"] = seeds;
  j["aggregate"] = aggregate_to_json(report.aggregate);
  if (include_timing) j["timing"] = {{"wall_seconds", report.wall_seconds}};
  return j.dump(2) + "\n";
}

std::string report_metrics_csv(const RunReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "phase,metric,seed,value\n";
  for (const auto& seed : report.seeds) {
    if (!seed.ok) continue;
    for (const auto& [key, value] : seed.baseline) {
      out << "baseline," << key << ',' << seed.seed << ',' << value << '\n';
    }
    for (const auto& [key, value] : seed.augmented) {
      out << "augmented," << key << ',' << seed.seed << ',' << value << '\n';
    }
  }
  for (const auto& [key, ms] : report.aggregate) {
    auto slash = key.find('/');
    out << key.substr(0, slash) << ',' << key.substr(slash + 1) << ",mean,"
        << ms.mean << '\n';
    out << key.substr(0, slash) << ',' << key.substr(slash + 1) << ",stderr,"
        << ms.stderr_ << '\n';
  }
  return out.str();
}

std::string annotations_to_jsonl(const RunReport& report) {
  std::ostringstream out;
  for (const auto& seed : report.seeds) {
    for (const auto& rec : seed.annotations) {
      json j;
      j["seed"] = seed.seed;
      j["id"] = rec.id;
      if (rec.pair_label) j["label"] = *rec.pair_label;
      if (!rec.search_assignment.empty()) j["assignment"] = rec.search_assignment;
      j["annotator"] = rec.annotator;
      if (rec.prompt) j["prompt"] = *rec.prompt;
      if (rec.response) j["response"] = *rec.response;
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

std::string selected_ids_text(const RunReport& report) {
  std::ostringstream out;
  for (const auto& seed : report.seeds) {
    for (const auto& id : seed.selected_ids) {
      out << seed.seed << '\t' << id << '\n';
    }
  }
  return out.str();
}

void write_run_outputs(const RunReport& report, const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::path dir(cfg.output_dir);
  atomic_write(dir / "report.json", report_to_json(report, true));
  atomic_write(dir / "metrics.csv", report_metrics_csv(report));
  atomic_write(dir / "selected_ids.txt", selected_ids_text(report));
  atomic_write(dir / "annotations.jsonl", annotations_to_jsonl(report));
}

// ---------------------------------------------------------------------------
// motivation study
// ---------------------------------------------------------------------------

MotivationReport run_motivation(const ExperimentConfig& cfg,
                                ChatTransport* transport) {
  auto start = Clock::now();
  if (cfg.task != Task::pairs) {
    throw ConfigError("motivate runs on the pairs task");
  }

  EmbeddingModel f0 = EmbeddingModel::base(cfg.base_seed);

  PairDataset full;
  PairDataset test;
  if (cfg.use_synthetic) {
    full = generate_synthetic_pairs(cfg.synth).data;
    SyntheticSpec test_spec = cfg.synth;
    test_spec.seed = hash_u64(cfg.synth.seed, kTestSetSalt);
    test_spec.n_pairs =
        cfg.synth_test_pairs > 0 ? cfg.synth_test_pairs : cfg.synth.n_pairs / 2;
    test = generate_synthetic_pairs(test_spec).data;
  } else {
    if (cfg.labeled_path.empty() || cfg.test_path.empty()) {
      throw ConfigError(
          "motivate needs a fully labeled data.labeled and data.test (or a "
          "[synthetic] section)");
    }
    full = load_pair_dataset(cfg.labeled_path);
    test = load_pair_dataset(cfg.test_path);
  }

  SplitResult split =
      make_extreme_split(full, score_pairs(f0, full), cfg.split_fraction);
  if (!cfg.output_dir.empty()) {
    std::filesystem::path dir(cfg.output_dir);
    save_pair_dataset(split.source_labeled, dir / "source.jsonl");
    save_pair_dataset(split.target_unlabeled, dir / "target.jsonl");
    save_sealed_truth(split.sealed, dir / "target.truth.jsonl");
  }

  PairsData data;
  data.labeled = std::move(split.source_labeled);
  data.pool = std::move(split.target_unlabeled);
  data.sealed = std::move(split.sealed);
  data.has_truth = true;
  data.test = std::move(test);
  finish_pairs_data(data, f0, cfg.split_fraction);

  size_t budget = resolve_budget(cfg, data.pool.size());

  struct Arm {
    std::string name;
    std::optional<Strategy> strategy;  // nullopt: init / 100%
    bool full_pool = false;
  };
  const std::vector<Arm> arms = {
      {"init", std::nullopt, false},
      {"100%", std::nullopt, true},
      {"random", Strategy::random, false},
      {"uncertainty", Strategy::uncertainty, false},
      {"base-consistent", Strategy::base_consistent, false},
      {"base-inconsistent", Strategy::base_inconsistent, false},
  };

  MotivationReport report;
  report.config_digest = config_hash(cfg);
  report.rows.resize(arms.size());
  for (size_t a = 0; a < arms.size(); ++a) {
    report.rows[a].arm = arms[a].name;
  }

  for (uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    EmbeddingModel f = train(f0, data.labeled, tc);  // shared baseline
    std::map<std::string, double> baseline = evaluate_pairs_model(f, data);
    std::vector<DeviationScore> scores_cache;

    for (size_t a = 0; a < arms.size(); ++a) {
      const Arm& arm = arms[a];
      std::map<std::string, double> metrics;
      if (arm.name == "init") {
        metrics = baseline;
      } else {
        std::vector<std::string> selected;
        if (arm.full_pool) {
          for (const auto& ex : data.pool.examples) selected.push_back(ex.id);
        } else {
          selected = select_pairs(*arm.strategy, data, f, f0, budget,
                                  seed, scores_cache);
        }
        std::vector<AnnotationRecord> records = annotate_pairs_selection(
            cfg, data, selected, scores_cache, seed, transport);
        EmbeddingModel model = train(f0, augment_labeled(data, records), tc);
        metrics = evaluate_pairs_model(model, data);
      }
      for (const auto& [key, value] : metrics) {
        report.rows[a].per_seed[key].push_back(value);
      }
    }
  }

  for (auto& row : report.rows) {
    for (const auto& [key, values] : row.per_seed) {
      row.metrics[key] = mean_stderr(values);
    }
  }
  report.wall_seconds = elapsed_seconds(start);
  return report;
}

std::string motivation_to_json(const MotivationReport& report,
                               bool include_timing) {
  json j;
  j["config"] = report.config_digest;
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["arm"] = row.arm;
    r["metrics"] = aggregate_to_json(row.metrics);
    json per_seed = json::object();
    for (const auto& [key, values] : row.per_seed) {
      per_seed[key] = values;
    }
    r["per_seed"] = per_seed;
    rows.push_back(r);
  }
  j["rows"] = rows;
  if (include_timing) j["timing"] = {{"wall_seconds", report.wall_seconds}};
  return j.dump(2) + "\n";
}

std::string motivation_metrics_csv(const MotivationReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "arm,metric,mean,stderr\n";
  for (const auto& row : report.rows) {
    for (const auto& [key, ms] : row.metrics) {
      out << row.arm << ',' << key << ',' << ms.mean << ',' << ms.stderr_
          << '\n';
    }
  }
  return out.str();
}

void write_motivation_outputs(const MotivationReport& report,
                              const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::path dir(cfg.output_dir);
  atomic_write(dir / "report.json", motivation_to_json(report, true));
  atomic_write(dir / "metrics.csv", motivation_metrics_csv(report));
}

// ---------------------------------------------------------------------------
// quantile analysis
// ---------------------------------------------------------------------------

QuantileReport run_quantiles(const ExperimentConfig& cfg, size_t n_quantiles,
                             ChatTransport* transport) {
  auto start = Clock::now();
  if (cfg.task != Task::pairs) {
    throw ConfigError("quantiles runs on the pairs task");
  }
  EmbeddingModel f0 = EmbeddingModel::base(cfg.base_seed);
  PairsData data = materialize_pairs(cfg, f0);

  // reference partition from the first seed's finetuned model
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.front();
  EmbeddingModel f_ref = train(f0, data.labeled, tc);
  std::vector<DeviationScore> scores =
      deviation_scores_pairs(f_ref, f0, data.pool);
  QuantilePartition partition = quantile_partition(scores, n_quantiles);

  AnnotatorFn annotator;
  switch (cfg.annotator) {
    case AnnotatorKind::gt:
      if (!data.has_truth) throw ConfigError("gt annotator needs sealed truth");
      annotator = [&data](const std::vector<std::string>& ids, uint64_t) {
        return annotate_gt_pairs(ids, data.sealed);
      };
      break;
    case AnnotatorKind::simulated: {
      if (!data.has_truth) {
        throw ConfigError("simulated annotator needs sealed truth");
      }
      auto quantile_of = partition.index_of();
      annotator = [&data, &cfg, quantile_of](
                      const std::vector<std::string>& ids, uint64_t seed) {
        return annotate_simulated_pairs(ids, data.sealed, cfg.noise,
                                        quantile_of, seed);
      };
      break;
    }
    case AnnotatorKind::llm:
      annotator = [&data, &cfg, transport](
                      const std::vector<std::string>& ids, uint64_t seed) {
        std::vector<PairExample> examples;
        for (const auto& id : ids) {
          examples.push_back(*data.pool_index.at(id));
        }
        static HttpChatTransport http_transport;
        return annotate_llm_pairs(examples, llm_config_for_seed(cfg, seed),
                                  transport ? transport : &http_transport);
      };
      break;
  }

  QuantileGainContext ctx;
  ctx.labeled = &data.labeled;
  ctx.pool = &data.pool;
  ctx.test = &data.test;
  ctx.base = &f0;
  ctx.train_config = cfg.train;
  ctx.seeds = cfg.seeds;

  QuantileReport report;
  report.config_digest = config_hash(cfg);
  report.n_quantiles = n_quantiles;
  report.rows = quantile_gain_analysis(ctx, partition, annotator);
  report.wall_seconds = elapsed_seconds(start);
  return report;
}

std::string quantiles_to_json(const QuantileReport& report,
                              bool include_timing) {
  json j;
  j["config"] = report.config_digest;
  j["n_quantiles"] = report.n_quantiles;
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"bin", row.bin},
                    {"size", row.size},
                    {"mean_gain", row.mean_gain},
                    {"stderr", row.stderr_},
                    {"per_seed", row.per_seed}});
  }
  j["bins"] = rows;
  if (include_timing) j["timing"] = {{"wall_seconds", report.wall_seconds}};
  return j.dump(2) + "\n";
}

std::string quantiles_csv(const QuantileReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "bin,size,mean_gain,stderr\n";
  for (const auto& row : report.rows) {
    out << row.bin << ',' << row.size << ',' << row.mean_gain << ','
        << row.stderr_ << '\n';
  }
  return out.str();
}

void write_quantile_outputs(const QuantileReport& report,
                            const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::path dir(cfg.output_dir);
  atomic_write(dir / "report.json", quantiles_to_json(report, true));
  atomic_write(dir / "quantile_gains.csv", quantiles_csv(report));
}

}  // namespace eagle
