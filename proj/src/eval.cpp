// SPDX-License-Identifier: Apache-2.0

#include "eagle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "eagle/errors.hpp"

namespace eagle {

namespace {

/// Midranks (1-based, ties averaged) of the given values.
std::vector<double> midranks(std::span<const double> values) {
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(values.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() &&
           values[order[j + 1]] == values[order[i]]) {
      ++j;
    }
    double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) {
      ranks[order[k]] = rank;
    }
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error("scores/labels size mismatch");
  }
  size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw Error("labels must be binary");
    }
    positives += static_cast<size_t>(l);
  }
  size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC needs both classes present");
  }

  std::vector<double> ranks = midranks(scores);
  double rank_sum = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  double p = static_cast<double>(positives);
  double n = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

MetricReport precision_at_1(const EmbeddingModel& model,
                            const SearchDataset& data) {
  LabelIndex index(model, data.labels);
  size_t evaluated = 0;
  size_t hits = 0;
  for (const auto& q : data.queries) {
    if (!q.relevant || q.relevant->empty()) continue;  // unlabeled query
    std::vector<ScoredLabel> top = index.top_k(model.embed(q.text), 1);
    ++evaluated;
    const std::string& top_id = top.front().id;
    if (std::find(q.relevant->begin(), q.relevant->end(), top_id) !=
        q.relevant->end()) {
      ++hits;
    }
  }
  if (evaluated == 0) {
    throw UndefinedMetricError("no queries carry a relevance set");
  }
  MetricReport report;
  report.metric = "p_at_1";
  report.value = static_cast<double>(hits) / static_cast<double>(evaluated);
  report.n = evaluated;
  return report;
}

std::string subset_tag(const SubsetSpec& spec) {
  switch (spec.kind) {
    case SubsetKind::all:
      return "all";
    case SubsetKind::high_base_error:
      return "high-base-error";
    case SubsetKind::low_base_error:
      return "low-base-error";
    case SubsetKind::domain:
      return "domain=" + spec.domain;
  }
  return "?";
}

MetricReport subset_auc(const std::vector<EvalExample>& examples,
                        const ExtremePartition& extremes,
                        const SubsetSpec& spec) {
  std::set<std::string> keep;
  if (spec.kind == SubsetKind::high_base_error) {
    keep.insert(extremes.hard_ids.begin(), extremes.hard_ids.end());
  } else if (spec.kind == SubsetKind::low_base_error) {
    keep.insert(extremes.easy_ids.begin(), extremes.easy_ids.end());
  }

  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& ex : examples) {
    bool in = false;
    switch (spec.kind) {
      case SubsetKind::all:
        in = true;
        break;
      case SubsetKind::domain:
        in = ex.domain && *ex.domain == spec.domain;
        break;
      default:
        in = keep.count(ex.id) > 0;
    }
    if (in) {
      scores.push_back(ex.score);
      labels.push_back(ex.label);
    }
  }
  if (scores.empty()) {
    throw UndefinedMetricError("empty subset: " + subset_tag(spec));
  }
  MetricReport report;
  report.metric = "auc";
  report.subset = subset_tag(spec);
  report.value = roc_auc(scores, labels);
  report.n = scores.size();
  return report;
}

double evaluate_auc(const EmbeddingModel& model, const PairDataset& test) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(test.size());
  labels.reserve(test.size());
  for (const auto& ex : test.examples) {
    if (!ex.label) {
      throw Error("evaluate_auc requires labels; example " + ex.id +
                  " is unlabeled");
    }
    scores.push_back(model.similarity(ex.text_a, ex.text_b));
    labels.push_back(*ex.label);
  }
  return roc_auc(scores, labels);
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) {
    ss += (v - out.mean) * (v - out.mean);
  }
  double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  out.stderr_ = sd / std::sqrt(static_cast<double>(values.size()));
  return out;
}

std::vector<QuantileGainRow> quantile_gain_analysis(
    const QuantileGainContext& ctx, const QuantilePartition& partition,
    const AnnotatorFn& annotator) {
  std::unordered_map<std::string, const PairExample*> pool_index;
  for (const auto& ex : ctx.pool->examples) {
    pool_index[ex.id] = &ex;
  }

  std::vector<QuantileGainRow> rows(partition.bins.size());
  for (size_t b = 0; b < partition.bins.size(); ++b) {
    rows[b].bin = static_cast<int>(b) + 1;
    rows[b].size = partition.bins[b].size();
  }

  for (uint64_t seed : ctx.seeds) {
    TrainConfig tc = ctx.train_config;
    tc.seed = seed;
    EmbeddingModel baseline = train(*ctx.base, *ctx.labeled, tc);
    double baseline_auc = evaluate_auc(baseline, *ctx.test);

    for (size_t b = 0; b < partition.bins.size(); ++b) {
      std::vector<AnnotationRecord> records =
          annotator(partition.bins[b], seed);

      PairDataset augmented;
      augmented.name = ctx.labeled->name + "+bin" + std::to_string(b + 1);
      augmented.examples = ctx.labeled->examples;
      for (const auto& rec : records) {
        auto it = pool_index.find(rec.id);
        if (it == pool_index.end()) {
          throw Error("bin " + std::to_string(b + 1) +
                      ": annotated id not in pool: " + rec.id);
        }
        if (!rec.pair_label) {
          throw Error("bin " + std::to_string(b + 1) +
                      ": record without pair label: " + rec.id);
        }
        PairExample ex = *it->second;
        ex.label = *rec.pair_label;
        augmented.examples.push_back(std::move(ex));
      }

      EmbeddingModel model = train(*ctx.base, augmented, tc);
      rows[b].per_seed.push_back(evaluate_auc(model, *ctx.test) - baseline_auc);
    }
  }

  for (auto& row : rows) {
    MeanStderr ms = mean_stderr(row.per_seed);
    row.mean_gain = ms.mean;
    row.stderr_ = ms.stderr_;
  }
  return rows;
}

std::vector<QuantileAccuracyRow> annotator_accuracy_by_quantile(
    const std::vector<AnnotationRecord>& records, const SealedPairTruth& truth,
    const QuantilePartition& partition,
    const std::unordered_map<std::string, double>& base_scores,
    const std::unordered_map<std::string, double>& finetuned_scores) {
  std::unordered_map<std::string, int> bin_of = partition.index_of();

  struct Tally {
    size_t n = 0;
    size_t annot = 0;
    size_t base = 0;
    size_t fine = 0;
  };
  std::vector<Tally> tallies(partition.bins.size());

  for (const auto& rec : records) {
    auto bit = bin_of.find(rec.id);
    if (bit == bin_of.end()) {
      throw Error("annotated id not in partition: " + rec.id);
    }
    if (!rec.pair_label) {
      throw Error("record without pair label: " + rec.id);
    }
    int label = truth.require(rec.id);
    Tally& t = tallies[static_cast<size_t>(bit->second - 1)];
    ++t.n;
    if (*rec.pair_label == label) ++t.annot;

    auto bs = base_scores.find(rec.id);
    auto fs = finetuned_scores.find(rec.id);
    if (bs == base_scores.end() || fs == finetuned_scores.end()) {
      throw Error("missing model score for id " + rec.id);
    }
    if ((bs->second >= 0.5 ? 1 : 0) == label) ++t.base;
    if ((fs->second >= 0.5 ? 1 : 0) == label) ++t.fine;
  }

  std::vector<QuantileAccuracyRow> rows(partition.bins.size());
  for (size_t b = 0; b < rows.size(); ++b) {
    rows[b].bin = static_cast<int>(b) + 1;
    rows[b].n = tallies[b].n;
    if (tallies[b].n > 0) {
      double n = static_cast<double>(tallies[b].n);
      rows[b].annotator_acc = static_cast<double>(tallies[b].annot) / n;
      rows[b].base_acc = static_cast<double>(tallies[b].base) / n;
      rows[b].finetuned_acc = static_cast<double>(tallies[b].fine) / n;
    }
  }
  return rows;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("spearman needs two equally sized samples of length >= 2");
  }
  std::vector<double> rx = midranks(x);
  std::vector<double> ry = midranks(y);
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) {
    throw UndefinedMetricError("spearman undefined for constant ranks");
  }
  return num / std::sqrt(dx * dy);
}

}  // namespace eagle
