// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"
#include "eagle/errors.hpp"
#include "eagle/rng.hpp"
#include "eagle/sampling.hpp"

using namespace eagle;

namespace {

std::vector<DeviationScore> make_scores(const std::vector<double>& zs) {
  std::vector<DeviationScore> out;
  for (size_t i = 0; i < zs.size(); ++i) {
    DeviationScore s;
    s.id = "s" + std::to_string(i);
    s.z = zs[i];
    out.push_back(std::move(s));
  }
  return out;
}

PairDataset tiny_pool(size_t n) {
  PairDataset pool;
  for (size_t i = 0; i < n; ++i) {
    pool.examples.push_back({"s" + std::to_string(i),
                             "text a " + std::to_string(i),
                             "text b " + std::to_string(i), std::nullopt,
                             std::nullopt});
  }
  return pool;
}

std::string random_text(SplitMix64& rng, size_t words) {
  std::string out;
  for (size_t w = 0; w < words; ++w) {
    if (!out.empty()) out.push_back(' ');
    for (size_t i = 0, len = 3 + rng.next_below(6); i < len; ++i) {
      out.push_back(static_cast<char>('a' + rng.next_below(26)));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("identical models give zero deviation everywhere") {
  EmbeddingModel f0 = EmbeddingModel::base();
  PairDataset pool = tiny_pool(10);
  auto scores = deviation_scores_pairs(f0, f0, pool);
  REQUIRE(scores.size() == 10);
  for (size_t i = 0; i < scores.size(); ++i) {
    CHECK(scores[i].id == pool.examples[i].id);  // pool order kept
    CHECK(scores[i].z == 0.0);
  }
}

TEST_CASE("deviation equals the squared score gap") {
  DeviationScore s;
  s.f_score = 0.9;
  s.f0_score = 0.3;
  double d = s.f_score - s.f0_score;
  CHECK(d * d == doctest::Approx(0.36));

  // recompute-and-compare against two independent similarity calls
  SyntheticSpec spec;
  spec.n_pairs = 50;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.3;
  spec.seed = 4;
  PairDataset data = generate_synthetic_pairs(spec).data;
  PairDataset pool = data;
  for (auto& ex : pool.examples) ex.label.reset();

  EmbeddingModel f0 = EmbeddingModel::base();
  TrainConfig tc;
  tc.seed = 1;
  EmbeddingModel f = train(f0, data, tc);
  auto scores = deviation_scores_pairs(f, f0, pool);
  for (size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool.examples[i];
    double fs = f.similarity(ex.text_a, ex.text_b);
    double f0s = f0.similarity(ex.text_a, ex.text_b);
    CHECK(scores[i].f_score == doctest::Approx(fs));
    CHECK(scores[i].f0_score == doctest::Approx(f0s));
    CHECK(scores[i].z == doctest::Approx((fs - f0s) * (fs - f0s)));
    CHECK(!scores[i].anchor_label_id.has_value());
  }
}

TEST_CASE("deviation scores are invariant under pool reordering") {
  SyntheticSpec spec;
  spec.n_pairs = 40;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.2;
  spec.seed = 8;
  PairDataset data = generate_synthetic_pairs(spec).data;
  EmbeddingModel f0 = EmbeddingModel::base();
  TrainConfig tc;
  tc.seed = 2;
  EmbeddingModel f = train(f0, data, tc);

  PairDataset pool = data;
  auto forward = deviation_scores_pairs(f, f0, pool);
  SplitMix64 rng(3);
  deterministic_shuffle(std::span<PairExample>(pool.examples), rng);
  auto shuffled = deviation_scores_pairs(f, f0, pool);

  std::unordered_map<std::string, double> by_id;
  for (const auto& s : forward) by_id[s.id] = s.z;
  for (const auto& s : shuffled) {
    CHECK(s.z == by_id.at(s.id));
  }
}

TEST_CASE("search deviation anchors on the base model's top label") {
  // fixture: f0 ranks L2 first for the query, f ranks L3 first
  auto axis = [](int d) {
    std::vector<double> v(static_cast<size_t>(kEmbeddingDims), 0.0);
    v[static_cast<size_t>(d)] = 1.0;
    return v;
  };
  auto diag = [](int d1, int d2, double w1, double w2) {
    std::vector<double> v(static_cast<size_t>(kEmbeddingDims), 0.0);
    v[static_cast<size_t>(d1)] = w1;
    v[static_cast<size_t>(d2)] = w2;
    return v;
  };
  std::vector<Label> corpus = {{"L1", "xxx"}, {"L2", "yyy"}, {"L3", "zzz"}};
  std::vector<SearchQuery> queries = {{"q1", "qqq", std::nullopt, std::nullopt}};

  EmbeddingModel f0 = EmbeddingModel::base(1);
  EmbeddingModel f = EmbeddingModel::base(1);
  for (auto* m : {&f0, &f}) {
    for (const auto& [text, dir] :
         std::vector<std::pair<std::string, std::vector<double>>>{
             {"xxx", axis(1)}, {"yyy", axis(2)}, {"zzz", axis(3)}}) {
      for (const auto& [idx, w] : featurize(text).entries) {
        m->set_row(idx, dir);
      }
    }
  }
  for (const auto& [idx, w] : featurize("qqq").entries) {
    f0.set_row(idx, diag(2, 3, 0.9, 0.1));  // q ~ L2 under f0
    f.set_row(idx, diag(2, 3, 0.1, 0.9));   // q ~ L3 under f
  }

  auto scores = deviation_scores_search(f, f0, queries, corpus);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].anchor_label_id == "L2");  // chosen by f0, not f
  double f0_score = f0.similarity("qqq", "yyy");
  double f_score = f.similarity("qqq", "yyy");
  CHECK(scores[0].f0_score == doctest::Approx(f0_score));
  CHECK(scores[0].f_score == doctest::Approx(f_score));
  CHECK(scores[0].z ==
        doctest::Approx((f_score - f0_score) * (f_score - f0_score)));
}

TEST_CASE("search deviation with a single label uses it for every query") {
  EmbeddingModel f0 = EmbeddingModel::base();
  std::vector<Label> corpus = {{"only", "the single label"}};
  std::vector<SearchQuery> queries = {
      {"q1", "first query", std::nullopt, std::nullopt},
      {"q2", "second query", std::nullopt, std::nullopt}};
  auto scores = deviation_scores_search(f0, f0, queries, corpus);
  REQUIRE(scores.size() == 2);
  for (const auto& s : scores) {
    CHECK(s.anchor_label_id == "only");
    CHECK(s.z == 0.0);
  }
  CHECK_THROWS_AS(deviation_scores_search(f0, f0, queries, {}), Error);
}

TEST_CASE("sample_top_b basics and ties") {
  auto scores = make_scores({0.5, 0.9, 0.9, 0.1});
  CHECK(sample_top_b(scores, 0).empty());
  auto top2 = sample_top_b(scores, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0] == "s1");  // pool order breaks the 0.9 tie
  CHECK(top2[1] == "s2");
  auto all = sample_top_b(scores, 4);
  CHECK(all == std::vector<std::string>{"s1", "s2", "s0", "s3"});
  CHECK_THROWS_AS(sample_top_b(scores, 5), Error);
}

TEST_CASE("sample_top_b is monotone in z") {
  SplitMix64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    size_t n = 5 + rng.next_below(20);
    std::vector<double> zs;
    for (size_t i = 0; i < n; ++i) zs.push_back(rng.next_double());
    size_t b = 1 + rng.next_below(n);
    auto scores = make_scores(zs);
    auto before = sample_top_b(scores, b);
    size_t bump = rng.next_below(n);
    std::string bumped = "s" + std::to_string(bump);
    bool was_in = std::find(before.begin(), before.end(), bumped) != before.end();
    zs[bump] += 10.0;
    auto after = sample_top_b(make_scores(zs), b);
    bool now_in = std::find(after.begin(), after.end(), bumped) != after.end();
    if (was_in) CHECK(now_in);
  }
}

TEST_CASE("sample_top_b is invariant under increasing transforms of z") {
  SplitMix64 rng(22);
  std::vector<double> zs;
  for (int i = 0; i < 30; ++i) zs.push_back(rng.next_double());
  auto base_sel = sample_top_b(make_scores(zs), 10);

  std::vector<double> affine = zs;
  for (double& z : affine) z = 2.0 * z + 1.0;
  CHECK(sample_top_b(make_scores(affine), 10) == base_sel);

  std::vector<double> cubic = zs;
  for (double& z : cubic) z = z * z * z;
  CHECK(sample_top_b(make_scores(cubic), 10) == base_sel);
}

TEST_CASE("sample_random is seeded, uniform and errors on overdraw") {
  PairDataset pool = tiny_pool(4);
  CHECK(sample_random(pool, 2, 9) == sample_random(pool, 2, 9));
  CHECK_THROWS_AS(sample_random(pool, 5, 9), Error);

  auto all = sample_random(pool, 4, 123);
  std::set<std::string> ids(all.begin(), all.end());
  CHECK(ids.size() == 4);  // permutation of the pool

  // frequency: each of 4 items drawn 2500 +/- 150 times over 10000 draws
  std::map<std::string, int> counts;
  for (uint64_t s = 0; s < 10000; ++s) {
    counts[sample_random(pool, 1, s)[0]]++;
  }
  for (const auto& [id, count] : counts) {
    CHECK(count > 2350);
    CHECK(count < 2650);
  }
}

TEST_CASE("uncertainty picks scores nearest one half") {
  // fixture model scoring is awkward; use the sort oracle over real scores
  SyntheticSpec spec;
  spec.n_pairs = 100;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.3;
  spec.seed = 12;
  PairDataset data = generate_synthetic_pairs(spec).data;
  PairDataset pool = data;
  for (auto& ex : pool.examples) ex.label.reset();
  EmbeddingModel f0 = EmbeddingModel::base();
  TrainConfig tc;
  tc.seed = 1;
  EmbeddingModel f = train(f0, data, tc);

  auto got = sample_uncertainty(f, pool, 20);

  std::vector<std::pair<double, size_t>> oracle;
  for (size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool.examples[i];
    oracle.emplace_back(std::abs(f.similarity(ex.text_a, ex.text_b) - 0.5), i);
  }
  std::stable_sort(oracle.begin(), oracle.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == pool.examples[oracle[i].second].id);
  }
}

TEST_CASE("base extreme sampling picks lowest or highest error") {
  PairDataset pool = tiny_pool(3);
  SealedPairTruth truth;
  truth.labels = {{"s0", 0}, {"s1", 0}, {"s2", 0}};
  std::unordered_map<std::string, double> f0_scores = {
      {"s0", 0.0}, {"s1", std::sqrt(0.5)}, {"s2", 1.0}};
  // errors: 0.0, 0.5, 1.0
  CHECK(sample_base_extreme(pool, truth, f0_scores, 1,
                            BaseExtremeMode::inconsistent) ==
        std::vector<std::string>{"s2"});
  CHECK(sample_base_extreme(pool, truth, f0_scores, 1,
                            BaseExtremeMode::consistent) ==
        std::vector<std::string>{"s0"});

  SealedPairTruth missing;
  missing.labels = {{"s0", 0}};
  CHECK_THROWS_AS(sample_base_extreme(pool, missing, f0_scores, 1,
                                      BaseExtremeMode::consistent),
                  Error);
}

TEST_CASE("consistent and inconsistent picks are disjoint at 2B <= pool") {
  SplitMix64 rng(33);
  for (int trial = 0; trial < 25; ++trial) {
    size_t n = 6 + rng.next_below(30);
    PairDataset pool = tiny_pool(n);
    SealedPairTruth truth;
    std::unordered_map<std::string, double> scores;
    for (size_t i = 0; i < n; ++i) {
      std::string id = "s" + std::to_string(i);
      truth.labels[id] = static_cast<int>(rng.next_below(2));
      scores[id] = rng.next_double();  // distinct errors almost surely
    }
    size_t b = 1 + rng.next_below(n / 2);
    auto lo = sample_base_extreme(pool, truth, scores, b,
                                  BaseExtremeMode::consistent);
    auto hi = sample_base_extreme(pool, truth, scores, b,
                                  BaseExtremeMode::inconsistent);
    std::set<std::string> all(lo.begin(), lo.end());
    for (const auto& id : hi) {
      CHECK(all.insert(id).second);
    }
  }
}

TEST_CASE("quantile partition sizes and ordering") {
  SplitMix64 rng(44);
  std::vector<double> zs;
  for (int i = 0; i < 100; ++i) zs.push_back(rng.next_double());
  auto part = quantile_partition(make_scores(zs), 20);
  REQUIRE(part.bins.size() == 20);
  for (const auto& bin : part.bins) {
    CHECK(bin.size() == 5);
  }

  auto uneven = quantile_partition(make_scores({1, 2, 3, 4, 5, 6, 7}), 3);
  REQUIRE(uneven.bins.size() == 3);
  CHECK(uneven.bins[0].size() == 3);
  CHECK(uneven.bins[1].size() == 2);
  CHECK(uneven.bins[2].size() == 2);

  CHECK_THROWS_AS(quantile_partition(make_scores({1.0}), 2), Error);
  CHECK_THROWS_AS(quantile_partition(make_scores({1.0}), 0), Error);
}

TEST_CASE("quantile bins are disjoint, cover the pool, and order by z") {
  SplitMix64 rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = 10 + rng.next_below(120);
    std::vector<double> zs;
    for (size_t i = 0; i < n; ++i) {
      zs.push_back(0.25 * static_cast<double>(rng.next_below(8)));  // ties
    }
    auto scores = make_scores(zs);
    size_t q = 1 + rng.next_below(std::min<uint64_t>(n, 12));
    auto part = quantile_partition(scores, q);

    std::unordered_map<std::string, double> z_of;
    for (const auto& s : scores) z_of[s.id] = s.z;
    std::set<std::string> seen;
    for (const auto& bin : part.bins) {
      for (const auto& id : bin) {
        CHECK(seen.insert(id).second);
      }
    }
    CHECK(seen.size() == n);
    for (size_t b = 0; b + 1 < part.bins.size(); ++b) {
      double min_here = 1e9;
      for (const auto& id : part.bins[b]) min_here = std::min(min_here, z_of[id]);
      double max_next = -1e9;
      for (const auto& id : part.bins[b + 1]) {
        max_next = std::max(max_next, z_of[id]);
      }
      CHECK(min_here >= max_next);
    }
  }
}

TEST_CASE("domain means and selection rules") {
  auto scores = make_scores({0.2, 0.4, 0.1});
  std::unordered_map<std::string, std::string> domains = {
      {"s0", "a"}, {"s1", "a"}, {"s2", "b"}};
  // means: a = 0.3, b = 0.1; budget 2 fits inside domain a
  auto sel = domain_sample(scores, domains, 2);
  CHECK(std::set<std::string>(sel.begin(), sel.end()) ==
        std::set<std::string>{"s0", "s1"});

  // budget = full pool selects everything
  auto all = domain_sample(scores, domains, 3);
  CHECK(all.size() == 3);

  std::unordered_map<std::string, std::string> missing = {{"s0", "a"}};
  CHECK_THROWS_AS(domain_sample(scores, missing, 1), Error);
}

TEST_CASE("domain selection spreads the budget uniformly") {
  // two domains of 4 each, means 0.3 > 0.1, budget 4: domain a alone covers
  std::vector<double> zs = {0.3, 0.3, 0.3, 0.3, 0.1, 0.1, 0.1, 0.1};
  auto scores = make_scores(zs);
  std::unordered_map<std::string, std::string> domains;
  for (int i = 0; i < 8; ++i) {
    domains["s" + std::to_string(i)] = i < 4 ? "a" : "b";
  }
  auto sel = domain_sample(scores, domains, 4);
  std::set<std::string> got(sel.begin(), sel.end());
  CHECK(got == std::set<std::string>{"s0", "s1", "s2", "s3"});

  // budget 6 needs both domains: 3 + 3 split
  auto six = domain_sample(scores, domains, 6);
  int from_a = 0, from_b = 0;
  for (const auto& id : six) {
    (domains[id] == "a" ? from_a : from_b)++;
  }
  CHECK(from_a == 3);
  CHECK(from_b == 3);
}

TEST_CASE("every strategy returns exactly B distinct pool ids") {
  SyntheticSpec spec;
  spec.n_pairs = 60;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.3;
  spec.seed = 14;
  PairDataset data = generate_synthetic_pairs(spec).data;
  PairDataset pool = data;
  SealedPairTruth truth;
  std::unordered_map<std::string, std::string> domains;
  for (auto& ex : pool.examples) {
    truth.labels[ex.id] = *ex.label;
    domains[ex.id] = *ex.domain;
    ex.label.reset();
  }
  EmbeddingModel f0 = EmbeddingModel::base();
  TrainConfig tc;
  tc.seed = 1;
  EmbeddingModel f = train(f0, data, tc);
  auto scores = deviation_scores_pairs(f, f0, pool);
  std::unordered_map<std::string, double> f0_scores;
  for (const auto& s : scores) f0_scores[s.id] = s.f0_score;

  std::set<std::string> pool_ids;
  for (const auto& ex : pool.examples) pool_ids.insert(ex.id);

  const size_t b = 17;
  std::vector<std::vector<std::string>> selections = {
      sample_random(pool, b, 7),
      sample_uncertainty(f, pool, b),
      sample_top_b(scores, b),
      sample_base_extreme(pool, truth, f0_scores, b,
                          BaseExtremeMode::consistent),
      sample_base_extreme(pool, truth, f0_scores, b,
                          BaseExtremeMode::inconsistent),
      domain_sample(scores, domains, b),
  };
  for (const auto& sel : selections) {
    CHECK(sel.size() == b);
    std::set<std::string> unique(sel.begin(), sel.end());
    CHECK(unique.size() == b);
    for (const auto& id : unique) {
      CHECK(pool_ids.count(id) == 1);
    }
  }
}

TEST_CASE("scores export as csv with the documented header") {
  auto scores = make_scores({0.5, 0.25});
  scores[0].anchor_label_id = "L7";
  std::unordered_map<std::string, std::string> domains = {{"s1", "dom"}};
  std::string csv = scores_to_csv(scores, domains);
  CHECK(csv.rfind("id,z,f_score,f0_score,anchor_label_id,domain\n", 0) == 0);
  CHECK(csv.find("s0,0.5,0,0,L7,\n") != std::string::npos);
  CHECK(csv.find("s1,0.25,0,0,,dom\n") != std::string::npos);
}

TEST_CASE("strategy names round trip") {
  for (Strategy s :
       {Strategy::random, Strategy::uncertainty, Strategy::cond_informativeness,
        Strategy::base_consistent, Strategy::base_inconsistent,
        Strategy::cond_informativeness_domain}) {
    CHECK(parse_strategy(strategy_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("bogus"), ConfigError);
}
