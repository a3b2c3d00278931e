// SPDX-License-Identifier: Apache-2.0

#include "eagle/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "eagle/errors.hpp"
#include "eagle/rng.hpp"

namespace eagle {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::random:
      return "random";
    case Strategy::uncertainty:
      return "uncertainty";
    case Strategy::cond_informativeness:
      return "cond-informativeness";
    case Strategy::base_consistent:
      return "base-consistent";
    case Strategy::base_inconsistent:
      return "base-inconsistent";
    case Strategy::cond_informativeness_domain:
      return "cond-informativeness-domain";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s :
       {Strategy::random, Strategy::uncertainty, Strategy::cond_informativeness,
        Strategy::base_consistent, Strategy::base_inconsistent,
        Strategy::cond_informativeness_domain}) {
    if (name == strategy_name(s)) return s;
  }
  throw ConfigError("unknown sampling strategy: " + name);
}

std::unordered_map<std::string, int> QuantilePartition::index_of() const {
  std::unordered_map<std::string, int> out;
  for (size_t b = 0; b < bins.size(); ++b) {
    for (const auto& id : bins[b]) {
      out[id] = static_cast<int>(b) + 1;
    }
  }
  return out;
}

std::vector<DeviationScore> deviation_scores_pairs(const EmbeddingModel& f,
                                                   const EmbeddingModel& f0,
                                                   const PairDataset& pool) {
  std::vector<DeviationScore> scores;
  scores.reserve(pool.size());
  for (const auto& ex : pool.examples) {
    FeatureVector fa = featurize(ex.text_a);
    FeatureVector fb = featurize(ex.text_b);
    DeviationScore s;
    s.id = ex.id;
    try {
      s.f_score = f.similarity(fa, fb);
      s.f0_score = f0.similarity(fa, fb);
    } catch (const EmptyEmbeddingError& e) {
      throw EmptyEmbeddingError(std::string(e.what()) + " (example " + ex.id +
                                ")");
    }
    double d = s.f_score - s.f0_score;
    s.z = d * d;
    scores.push_back(std::move(s));
  }
  return scores;
}

std::vector<DeviationScore> deviation_scores_search(
    const EmbeddingModel& f, const EmbeddingModel& f0,
    const std::vector<SearchQuery>& queries, const std::vector<Label>& corpus) {
  if (corpus.empty()) {
    throw Error("deviation_scores_search requires a nonempty corpus");
  }
  LabelIndex base_index(f0, corpus);
  std::map<std::string, FeatureVector> label_features;
  for (const auto& label : corpus) {
    label_features[label.id] = featurize(label.text);
  }

  std::vector<DeviationScore> scores;
  scores.reserve(queries.size());
  for (const auto& q : queries) {
    DeviationScore s;
    s.id = q.id;
    try {
      FeatureVector fq = featurize(q.text);
      std::vector<double> q0 = f0.embed(fq);
      ScoredLabel anchor = base_index.top_k(q0, 1).front();
      s.anchor_label_id = anchor.id;
      s.f0_score = anchor.score;
      s.f_score = f.similarity(fq, label_features.at(anchor.id));
    } catch (const EmptyEmbeddingError& e) {
      throw EmptyEmbeddingError(std::string(e.what()) + " (query " + q.id + ")");
    }
    double d = s.f_score - s.f0_score;
    s.z = d * d;
    scores.push_back(std::move(s));
  }
  return scores;
}

namespace {

/// Indices of `scores` ordered by descending key, ties by pool position.
template <typename KeyFn>
std::vector<size_t> order_by_desc(size_t n, KeyFn key) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return key(a) > key(b); });
  return order;
}

}  // namespace

std::vector<std::string> sample_top_b(const std::vector<DeviationScore>& scores,
                                      size_t budget) {
  if (budget > scores.size()) {
    throw Error("budget exceeds pool size");
  }
  std::vector<size_t> order =
      order_by_desc(scores.size(), [&](size_t i) { return scores[i].z; });
  std::vector<std::string> out;
  out.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    out.push_back(scores[order[i]].id);
  }
  return out;
}

std::vector<std::string> sample_random(const std::vector<std::string>& pool_ids,
                                       size_t budget, uint64_t seed) {
  if (budget > pool_ids.size()) {
    throw Error("budget exceeds pool size");
  }
  std::vector<size_t> order(pool_ids.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(hash_u64(seed, 0x7a2d0ULL));
  deterministic_shuffle(std::span<size_t>(order), rng);
  std::vector<std::string> out;
  out.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    out.push_back(pool_ids[order[i]]);
  }
  return out;
}

std::vector<std::string> sample_random(const PairDataset& pool, size_t budget,
                                       uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& ex : pool.examples) ids.push_back(ex.id);
  return sample_random(ids, budget, seed);
}

std::vector<std::string> sample_uncertainty(const EmbeddingModel& f,
                                            const PairDataset& pool,
                                            size_t budget) {
  if (budget > pool.size()) {
    throw Error("budget exceeds pool size");
  }
  std::vector<double> uncertainty(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool.examples[i];
    uncertainty[i] = -std::abs(f.similarity(ex.text_a, ex.text_b) - 0.5);
  }
  std::vector<size_t> order =
      order_by_desc(pool.size(), [&](size_t i) { return uncertainty[i]; });
  std::vector<std::string> out;
  out.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    out.push_back(pool.examples[order[i]].id);
  }
  return out;
}

std::vector<std::string> sample_base_extreme(
    const PairDataset& pool, const SealedPairTruth& truth,
    const std::unordered_map<std::string, double>& f0_scores, size_t budget,
    BaseExtremeMode mode) {
  if (budget > pool.size()) {
    throw Error("budget exceeds pool size");
  }
  std::vector<double> errors(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool.examples[i];
    auto it = f0_scores.find(ex.id);
    if (it == f0_scores.end()) {
      throw Error("no base score for example " + ex.id);
    }
    double e = it->second - static_cast<double>(truth.require(ex.id));
    errors[i] = e * e;
  }
  std::vector<size_t> order = order_by_desc(pool.size(), [&](size_t i) {
    return mode == BaseExtremeMode::inconsistent ? errors[i] : -errors[i];
  });
  std::vector<std::string> out;
  out.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    out.push_back(pool.examples[order[i]].id);
  }
  return out;
}

QuantilePartition quantile_partition(const std::vector<DeviationScore>& scores,
                                     size_t n_quantiles) {
  if (n_quantiles < 1 || n_quantiles > scores.size()) {
    throw Error("n_quantiles must lie in [1, pool size]");
  }
  std::vector<size_t> order =
      order_by_desc(scores.size(), [&](size_t i) { return scores[i].z; });

  QuantilePartition part;
  part.bins.resize(n_quantiles);
  size_t base = scores.size() / n_quantiles;
  size_t remainder = scores.size() % n_quantiles;
  size_t pos = 0;
  for (size_t b = 0; b < n_quantiles; ++b) {
    size_t take = base + (b < remainder ? 1 : 0);
    for (size_t i = 0; i < take; ++i) {
      part.bins[b].push_back(scores[order[pos++]].id);
    }
  }
  return part;
}

std::vector<std::string> domain_sample(
    const std::vector<DeviationScore>& scores,
    const std::unordered_map<std::string, std::string>& domains,
    size_t budget) {
  if (budget > scores.size()) {
    throw Error("budget exceeds pool size");
  }

  // ordered map: deterministic domain iteration
  std::map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < scores.size(); ++i) {
    auto it = domains.find(scores[i].id);
    if (it == domains.end()) {
      throw Error("no domain tag for example " + scores[i].id);
    }
    members[it->second].push_back(i);
  }

  struct DomainInfo {
    std::string tag;
    double mean;
    std::vector<size_t> items;  // pool positions, by descending z
  };
  std::vector<DomainInfo> infos;
  for (auto& [tag, items] : members) {
    double sum = 0.0;
    for (size_t i : items) sum += scores[i].z;
    std::stable_sort(items.begin(), items.end(), [&](size_t a, size_t b) {
      return scores[a].z > scores[b].z;
    });
    infos.push_back(
        {tag, sum / static_cast<double>(items.size()), std::move(items)});
  }
  std::stable_sort(infos.begin(), infos.end(),
                   [](const DomainInfo& a, const DomainInfo& b) {
                     return a.mean > b.mean;
                   });

  // greedy domain selection until the budget is coverable
  size_t capacity = 0;
  size_t n_selected = 0;
  while (n_selected < infos.size() && capacity < budget) {
    capacity += infos[n_selected].items.size();
    ++n_selected;
  }

  // uniform shares capped by domain size; leftover spills to the next
  // domains in mean order
  std::vector<size_t> take(n_selected, 0);
  if (n_selected > 0) {
    size_t share = budget / n_selected;
    size_t extra = budget % n_selected;
    size_t leftover = 0;
    for (size_t d = 0; d < n_selected; ++d) {
      size_t want = share + (d < extra ? 1 : 0);
      take[d] = std::min(want, infos[d].items.size());
      leftover += want - take[d];
    }
    while (leftover > 0) {
      bool placed = false;
      for (size_t d = 0; d < n_selected && leftover > 0; ++d) {
        if (take[d] < infos[d].items.size()) {
          ++take[d];
          --leftover;
          placed = true;
        }
      }
      if (!placed) break;  // cannot happen: capacity >= budget
    }
  }

  std::vector<std::string> out;
  out.reserve(budget);
  for (size_t d = 0; d < n_selected; ++d) {
    for (size_t i = 0; i < take[d]; ++i) {
      out.push_back(scores[infos[d].items[i]].id);
    }
  }
  return out;
}

std::string scores_to_csv(
    const std::vector<DeviationScore>& scores,
    const std::unordered_map<std::string, std::string>& domains) {
  std::ostringstream out;
  out << "id,z,f_score,f0_score,anchor_label_id,domain\n";
  out.precision(17);
  for (const auto& s : scores) {
    out << s.id << ',' << s.z << ',' << s.f_score << ',' << s.f0_score << ',';
    if (s.anchor_label_id) out << *s.anchor_label_id;
    out << ',';
    if (auto it = domains.find(s.id); it != domains.end()) out << it->second;
    out << '\n';
  }
  return out.str();
}

}  // namespace eagle
