// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eagle/config.hpp"
#include "eagle/errors.hpp"
#include "eagle/eval.hpp"
#include "eagle/io.hpp"
#include "eagle/pipeline.hpp"

namespace {

using namespace eagle;

std::vector<std::string> collect_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> overrides;
  for (const auto& extra : extras) {
    if (extra.rfind("--", 0) != 0 || extra.find('=') == std::string::npos) {
      throw ConfigError("unrecognized argument (overrides look like "
                        "--section.key=value): " + extra);
    }
    overrides.push_back(extra.substr(2));
  }
  return overrides;
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& extras) {
  std::vector<std::string> overrides = collect_overrides(extras);
  if (config_path.empty()) {
    TomlDoc doc;
    apply_overrides(doc, overrides);
    return experiment_config_from_toml(doc);
  }
  return load_experiment_config(config_path, overrides);
}

int exit_code_for(const RunReport& report) {
  if (report.failed) return 4;
  if (report.partial) return 3;
  return 0;
}

void print_aggregate(const std::map<std::string, MeanStderr>& aggregate) {
  for (const auto& [key, ms] : aggregate) {
    std::printf("  %-36s %.4f +/- %.4f\n", key.c_str(), ms.mean, ms.stderr_);
  }
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);
  RunReport report = run_eagle(cfg);
  write_run_outputs(report, cfg);
  std::printf("run %s strategy=%s annotator=%s pool=%zu budget=%zu\n",
              report.config_digest.c_str(), report.strategy.c_str(),
              report.annotator.c_str(), report.pool_size, report.budget);
  for (const auto& seed : report.seeds) {
    if (!seed.ok) {
      std::printf("  seed %llu FAILED: %s\n",
                  static_cast<unsigned long long>(seed.seed),
                  seed.error.c_str());
    }
  }
  print_aggregate(report.aggregate);
  if (!cfg.output_dir.empty()) {
    std::printf("outputs written to %s\n", cfg.output_dir.c_str());
  }
  return exit_code_for(report);
}

int cmd_motivate(const std::string& config_path,
                 const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);
  MotivationReport report = run_motivation(cfg);
  write_motivation_outputs(report, cfg);
  std::printf("%-24s %-22s %-22s %-22s\n", "arm", "auc", "high-base-error",
              "low-base-error");
  for (const auto& row : report.rows) {
    auto cell = [&](const char* key) {
      auto it = row.metrics.find(key);
      if (it == row.metrics.end()) return std::string("-");
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f +/- %.4f", it->second.mean,
                    it->second.stderr_);
      return std::string(buf);
    };
    std::printf("%-24s %-22s %-22s %-22s\n", row.arm.c_str(),
                cell("auc").c_str(), cell("auc:high-base-error").c_str(),
                cell("auc:low-base-error").c_str());
  }
  return report.partial ? 3 : 0;
}

int cmd_quantiles(const std::string& config_path, size_t n_quantiles,
                  const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);
  size_t n = n_quantiles > 0 ? n_quantiles : cfg.n_quantiles;
  QuantileReport report = run_quantiles(cfg, n);
  write_quantile_outputs(report, cfg);
  std::printf("bin,size,mean_gain,stderr\n");
  for (const auto& row : report.rows) {
    std::printf("%d,%zu,%.5f,%.5f\n", row.bin, row.size, row.mean_gain,
                row.stderr_);
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_path,
              const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);
  if (!cfg.use_synthetic) {
    throw ConfigError("synth needs a [synthetic] section");
  }
  SyntheticDataset ds = generate_synthetic_pairs(cfg.synth);
  save_pair_dataset(ds.data, out_path);
  std::filesystem::path meta(out_path);
  meta.replace_extension(".meta.jsonl");
  save_synthetic_meta(ds, meta);
  std::printf("wrote %zu pairs to %s (meta: %s)\n", ds.data.size(),
              out_path.c_str(), meta.string().c_str());
  return 0;
}

int cmd_annotate(const std::string& config_path, const std::string& in_path,
                 const std::string& ids_path, const std::string& truth_path,
                 const std::string& model_path, const std::string& queries_path,
                 const std::string& labels_path, const std::string& out_path,
                 const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);

  std::vector<AnnotationRecord> records;
  if (!queries_path.empty()) {
    // search mode: filter Y' with the provided finetuned model
    if (labels_path.empty() || model_path.empty()) {
      throw ConfigError("search annotation needs --queries, --labels and "
                        "--model");
    }
    SearchDataset ds = load_search_dataset(queries_path, labels_path);
    EmbeddingModel f = EmbeddingModel::load(model_path);
    SealedSearchTruth sealed;
    std::vector<std::string> ids;
    for (auto& q : ds.queries) {
      ids.push_back(q.id);
      if (q.relevant) sealed.relevant[q.id] = *q.relevant;
    }
    std::unordered_map<std::string, const Label*> label_by_id;
    for (const auto& l : ds.labels) label_by_id[l.id] = &l;

    std::vector<SearchCandidates> items;
    for (const auto& q : ds.queries) {
      SearchCandidates item;
      item.query_id = q.id;
      item.query_text = q.text;
      for (const auto& scored : nearest_labels(f, q.text, ds.labels, cfg.top_k)) {
        item.filtered.push_back(
            {scored.id, label_by_id.at(scored.id)->text, scored.score});
      }
      items.push_back(std::move(item));
    }
    switch (cfg.annotator) {
      case AnnotatorKind::gt:
        records = annotate_gt_search(items, sealed);
        break;
      case AnnotatorKind::simulated:
        records = annotate_simulated_search(items, sealed, cfg.noise, {},
                                            cfg.seeds.front());
        break;
      case AnnotatorKind::llm: {
        HttpChatTransport transport;
        records = annotate_llm_search(items, cfg.search_template, cfg.llm,
                                      &transport);
        break;
      }
    }
  } else {
    if (in_path.empty()) {
      throw ConfigError("pair annotation needs --in <pairs.jsonl>");
    }
    PairDataset pool = load_pair_dataset(in_path);
    std::vector<std::string> ids;
    if (!ids_path.empty()) {
      std::ifstream in(ids_path);
      if (!in) throw Error("cannot open " + ids_path);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) ids.push_back(line);
      }
    } else {
      for (const auto& ex : pool.examples) ids.push_back(ex.id);
    }

    SealedPairTruth truth;
    if (!truth_path.empty()) truth = load_sealed_truth(truth_path);

    switch (cfg.annotator) {
      case AnnotatorKind::gt:
        records = annotate_gt_pairs(ids, truth);
        break;
      case AnnotatorKind::simulated:
        records = annotate_simulated_pairs(ids, truth, cfg.noise, {},
                                           cfg.seeds.front());
        break;
      case AnnotatorKind::llm: {
        std::unordered_map<std::string, const PairExample*> index;
        for (const auto& ex : pool.examples) index[ex.id] = &ex;
        std::vector<PairExample> examples;
        for (const auto& id : ids) {
          auto it = index.find(id);
          if (it == index.end()) throw Error("id not in --in file: " + id);
          examples.push_back(*it->second);
        }
        HttpChatTransport transport;
        records = annotate_llm_pairs(examples, cfg.llm, &transport);
        break;
      }
    }
  }

  RunReport shim;
  shim.seeds.resize(1);
  shim.seeds[0].seed = cfg.seeds.front();
  shim.seeds[0].annotations = std::move(records);
  std::string body = annotations_to_jsonl(shim);
  if (out_path.empty() || out_path == "-") {
    std::fwrite(body.data(), 1, body.size(), stdout);
  } else {
    atomic_write(out_path, body);
    std::printf("wrote %zu annotations to %s\n",
                shim.seeds[0].annotations.size(), out_path.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& model_path,
             const std::string& test_path, const std::string& queries_path,
             const std::string& labels_path, const std::string& out_dir,
             const std::vector<std::string>& extras) {
  ExperimentConfig cfg = load_config(config_path, extras);
  if (model_path.empty()) throw ConfigError("eval needs --model");
  EmbeddingModel model = EmbeddingModel::load(model_path);

  std::ostringstream csv;
  csv.precision(17);
  csv << "metric,subset,value,n\n";
  if (!queries_path.empty()) {
    if (labels_path.empty()) throw ConfigError("eval search needs --labels");
    SearchDataset test = load_search_dataset(queries_path, labels_path);
    MetricReport p1 = precision_at_1(model, test);
    std::printf("p_at_1 = %.5f (n=%zu, excluded=%zu)\n", p1.value, p1.n,
                test.queries.size() - p1.n);
    csv << "p_at_1,all," << p1.value << ',' << p1.n << '\n';
  } else {
    if (test_path.empty()) throw ConfigError("eval pairs needs --test");
    PairDataset test = load_pair_dataset(test_path);
    EmbeddingModel f0 = EmbeddingModel::base(cfg.base_seed);

    std::vector<EvalExample> examples;
    std::vector<std::pair<std::string, double>> errors;
    for (const auto& ex : test.examples) {
      if (!ex.label) throw Error("test example " + ex.id + " is unlabeled");
      EvalExample e;
      e.id = ex.id;
      e.score = model.similarity(ex.text_a, ex.text_b);
      e.label = *ex.label;
      e.domain = ex.domain;
      examples.push_back(e);
      double err =
          f0.similarity(ex.text_a, ex.text_b) - static_cast<double>(*ex.label);
      errors.emplace_back(ex.id, err * err);
    }
    ExtremePartition extremes = extreme_partition(errors, cfg.split_fraction);
    for (SubsetKind kind : {SubsetKind::all, SubsetKind::high_base_error,
                            SubsetKind::low_base_error}) {
      try {
        MetricReport r = subset_auc(examples, extremes, {kind, ""});
        std::printf("auc[%s] = %.5f (n=%zu)\n", r.subset->c_str(), r.value,
                    r.n);
        csv << "auc," << *r.subset << ',' << r.value << ',' << r.n << '\n';
      } catch (const UndefinedMetricError&) {
      }
    }
  }
  if (!out_dir.empty()) {
    atomic_write(std::filesystem::path(out_dir) / "metrics.csv", csv.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EAGLE: deviation-sampled LLM annotation for embedding models"};
  app.require_subcommand(1);
  app.allow_extras();

  std::string config_path;
  app.add_option("--config", config_path, "TOML config file")
      ->expected(1);

  auto* run = app.add_subcommand("run", "run the annotate-and-retrain loop");
  run->fallthrough();
  auto* motivate =
      app.add_subcommand("motivate", "sampling-strategy comparison study");
  motivate->fallthrough();
  auto* quantiles =
      app.add_subcommand("quantiles", "per-deviation-quantile gain analysis");
  quantiles->fallthrough();
  size_t n_quantiles = 0;
  quantiles->add_option("--n-quantiles", n_quantiles, "number of bins");
  auto* synth = app.add_subcommand("synth", "generate a synthetic pair dataset");
  synth->fallthrough();
  std::string synth_out = "pairs.jsonl";
  synth->add_option("--out", synth_out, "output JSONL path");
  auto* annotate = app.add_subcommand("annotate", "annotate a pool only");
  annotate->fallthrough();
  std::string ann_in, ann_ids, ann_truth, ann_model, ann_queries, ann_labels,
      ann_out;
  annotate->add_option("--in", ann_in, "pairs JSONL to annotate");
  annotate->add_option("--ids", ann_ids, "file with one id per line");
  annotate->add_option("--truth", ann_truth, "sealed truth JSONL (gt/simulated)");
  annotate->add_option("--model", ann_model, "finetuned model file (search)");
  annotate->add_option("--queries", ann_queries, "queries JSONL (search)");
  annotate->add_option("--labels", ann_labels, "labels JSONL (search)");
  annotate->add_option("--out", ann_out, "output annotations JSONL");
  auto* eval_cmd = app.add_subcommand("eval", "metrics on stored artifacts");
  eval_cmd->fallthrough();
  std::string eval_model, eval_test, eval_queries, eval_labels, eval_out;
  eval_cmd->add_option("--model", eval_model, "model file");
  eval_cmd->add_option("--test", eval_test, "labeled test pairs JSONL");
  eval_cmd->add_option("--test-queries", eval_queries, "test queries JSONL");
  eval_cmd->add_option("--labels", eval_labels, "labels JSONL");
  eval_cmd->add_option("--out", eval_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::string> extras = app.remaining();
    if (run->parsed()) return cmd_run(config_path, extras);
    if (motivate->parsed()) return cmd_motivate(config_path, extras);
    if (quantiles->parsed()) {
      return cmd_quantiles(config_path, n_quantiles, extras);
    }
    if (synth->parsed()) return cmd_synth(config_path, synth_out, extras);
    if (annotate->parsed()) {
      return cmd_annotate(config_path, ann_in, ann_ids, ann_truth, ann_model,
                          ann_queries, ann_labels, ann_out, extras);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(config_path, eval_model, eval_test, eval_queries,
                      eval_labels, eval_out, extras);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
