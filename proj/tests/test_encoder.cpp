// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "eagle/dataset.hpp"
#include "eagle/encoder.hpp"
#include "eagle/errors.hpp"
#include "eagle/io.hpp"
#include "eagle/rng.hpp"
#include "eagle/simd/kernels.hpp"

using namespace eagle;
namespace fs = std::filesystem;

namespace {

std::string random_text(SplitMix64& rng, size_t words) {
  std::string out;
  for (size_t w = 0; w < words; ++w) {
    if (!out.empty()) out.push_back(' ');
    size_t len = 3 + rng.next_below(8);
    for (size_t i = 0; i < len; ++i) {
      out.push_back(static_cast<char>('a' + rng.next_below(26)));
    }
  }
  return out;
}

/// Model whose embedding of each listed text is exactly the given unit
/// direction: every gram row of that text is set to the direction, so the
/// projection is a positive multiple of it. Texts must not share grams.
EmbeddingModel fixture_model(
    const std::vector<std::pair<std::string, std::vector<double>>>& texts) {
  EmbeddingModel m = EmbeddingModel::base(123);
  for (const auto& [text, direction] : texts) {
    for (const auto& [idx, w] : featurize(text).entries) {
      m.set_row(idx, direction);
    }
  }
  return m;
}

std::vector<double> axis(int d) {
  std::vector<double> v(static_cast<size_t>(kEmbeddingDims), 0.0);
  v[static_cast<size_t>(d)] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("embeddings have unit norm for 1000 random texts") {
  EmbeddingModel m = EmbeddingModel::base();
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> e = m.embed(random_text(rng, 1 + rng.next_below(10)));
    CHECK(std::abs(simd::nrm2(e) - 1.0) < 1e-9);
  }
}

TEST_CASE("embedding the empty text raises EmptyEmbedding") {
  EmbeddingModel m = EmbeddingModel::base();
  CHECK_THROWS_AS(m.embed(""), EmptyEmbeddingError);
}

TEST_CASE("embedding is deterministic") {
  EmbeddingModel m = EmbeddingModel::base();
  std::vector<double> a = m.embed("identical text");
  std::vector<double> b = m.embed("identical text");
  CHECK(a == b);
}

TEST_CASE("self similarity is one, similarity is symmetric") {
  EmbeddingModel m = EmbeddingModel::base();
  CHECK(std::abs(m.similarity("some sentence", "some sentence") - 1.0) < 1e-9);
  SplitMix64 rng(2);
  for (int i = 0; i < 25; ++i) {
    std::string a = random_text(rng, 4);
    std::string b = random_text(rng, 4);
    CHECK(m.similarity(a, b) == m.similarity(b, a));
    CHECK(m.similarity(a, b) >= -1.0 - 1e-12);
    CHECK(m.similarity(a, b) <= 1.0 + 1e-12);
  }
}

TEST_CASE("orthogonal fixture rows give zero similarity") {
  EmbeddingModel m = fixture_model({{"aaa", axis(0)}, {"bbb", axis(1)}});
  CHECK(m.similarity("aaa", "bbb") == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(m.similarity("aaa", "aaa") == doctest::Approx(1.0));
}

TEST_CASE("epochs 0 and lr 0 return parameter-identical models") {
  SyntheticSpec spec;
  spec.n_pairs = 50;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.2;
  spec.seed = 5;
  PairDataset data = generate_synthetic_pairs(spec).data;
  EmbeddingModel base = EmbeddingModel::base();

  TrainConfig no_epochs;
  no_epochs.epochs = 0;
  CHECK(train(base, data, no_epochs).params_equal(base));

  TrainConfig no_lr;
  no_lr.learning_rate = 0.0;
  CHECK(train(base, data, no_lr).params_equal(base));
}

TEST_CASE("training rejects unlabeled examples before any step") {
  PairDataset data;
  data.examples.push_back({"u", "text one", "text two", std::nullopt,
                           std::nullopt});
  EmbeddingModel base = EmbeddingModel::base();
  CHECK_THROWS_AS(train(base, data, TrainConfig{}), Error);
}

TEST_CASE("training lowers train MSE and leaves the input model untouched") {
  SyntheticSpec spec;
  spec.n_pairs = 500;
  spec.vocab_size = 100;
  spec.flip_fraction = 0.3;
  spec.seed = 9;
  PairDataset data = generate_synthetic_pairs(spec).data;
  EmbeddingModel base = EmbeddingModel::base();
  double before = dataset_mse(base, data);

  TrainConfig tc;
  tc.seed = 1;
  EmbeddingModel f = train(base, data, tc);
  CHECK(dataset_mse(f, data) < before);
  CHECK(base.overrides().empty());  // input untouched
  CHECK(f.provenance().size() == 2);
  CHECK(f.provenance().back().kind == "finetuned");
  CHECK(f.provenance().back().parent == base.id());
  CHECK(f.provenance().back().train_size == 500);
}

TEST_CASE("training is bitwise deterministic per seed") {
  SyntheticSpec spec;
  spec.n_pairs = 120;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.25;
  spec.seed = 2;
  PairDataset data = generate_synthetic_pairs(spec).data;
  EmbeddingModel base = EmbeddingModel::base();
  TrainConfig tc;
  tc.seed = 77;
  EmbeddingModel a = train(base, data, tc);
  EmbeddingModel b = train(base, data, tc);
  CHECK(a.params_equal(b));

  tc.seed = 78;
  EmbeddingModel c = train(base, data, tc);
  CHECK(!a.params_equal(c));  // shuffle differs
}

TEST_CASE("analytic gradient matches central finite differences") {
  SplitMix64 rng(31);
  EmbeddingModel m = EmbeddingModel::base();
  int checked = 0;
  for (int probe = 0; probe < 20; ++probe) {
    std::string ta = random_text(rng, 3 + rng.next_below(4));
    std::string tb = random_text(rng, 3 + rng.next_below(4));
    FeatureVector fa = featurize(ta);
    FeatureVector fb = featurize(tb);
    double target = static_cast<double>(rng.next_below(2));

    GradMap grad;
    pair_loss_accumulate(m, fa, fb, target, 1.0, grad);

    // probe a random touched row/dim with a non-negligible gradient
    std::vector<uint32_t> rows;
    for (const auto& [idx, g] : grad) rows.push_back(idx);
    std::sort(rows.begin(), rows.end());
    uint32_t row = rows[rng.next_below(rows.size())];
    size_t dim = rng.next_below(static_cast<uint64_t>(kEmbeddingDims));
    double analytic = grad.at(row)[dim];
    if (std::abs(analytic) < 1e-8) {
      --probe;  // uninformative probe, redraw
      continue;
    }

    std::vector<double> original(static_cast<size_t>(kEmbeddingDims));
    m.row(row, original);

    auto loss_at = [&](double delta) {
      std::vector<double> perturbed = original;
      perturbed[dim] += delta;
      EmbeddingModel probe_model = m;
      probe_model.set_row(row, perturbed);
      double e = probe_model.similarity(fa, fb) - target;
      return e * e;
    };
    double eps = 1e-7;
    double fd = (loss_at(eps) - loss_at(-eps)) / (2 * eps);
    double rel = std::abs(fd - analytic) /
                 std::max(std::abs(fd), std::abs(analytic));
    CHECK(rel < 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("nearest labels ranks an exact copy first with score one") {
  EmbeddingModel m = EmbeddingModel::base();
  std::vector<Label> corpus = {
      {"L1", "something else entirely"},
      {"L2", "the exact query text"},
      {"L3", "another unrelated label"},
  };
  auto top = nearest_labels(m, "the exact query text", corpus, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].id == "L2");
  CHECK(std::abs(top[0].score - 1.0) < 1e-9);
}

TEST_CASE("k larger than the corpus returns the whole corpus") {
  EmbeddingModel m = EmbeddingModel::base();
  std::vector<Label> corpus = {{"a", "one"}, {"b", "two"}};
  CHECK(nearest_labels(m, "query text", corpus, 10).size() == 2);
}

TEST_CASE("nearest labels equals full sort on random corpora") {
  EmbeddingModel m = EmbeddingModel::base();
  SplitMix64 rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    size_t n = 20 + rng.next_below(181);  // up to 200 labels
    std::vector<Label> corpus;
    for (size_t i = 0; i < n; ++i) {
      corpus.push_back({"L" + std::to_string(i), random_text(rng, 3)});
    }
    std::string query = random_text(rng, 3);
    auto got = nearest_labels(m, query, corpus, 10);

    // exhaustive oracle: score everything, full sort, truncate
    std::vector<std::pair<double, std::string>> all;
    for (const auto& label : corpus) {
      all.emplace_back(m.similarity(query, label.text), label.id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    REQUIRE(got.size() == std::min<size_t>(10, n));
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].id == all[i].second);
      CHECK(got[i].score == doctest::Approx(all[i].first));
    }
  }
}

TEST_CASE("nearest labels on an empty corpus is an error") {
  EmbeddingModel m = EmbeddingModel::base();
  CHECK_THROWS_AS(nearest_labels(m, "q", {}, 1), Error);
}

TEST_CASE("model save/load round trip is bit exact") {
  SyntheticSpec spec;
  spec.n_pairs = 80;
  spec.vocab_size = 64;
  spec.flip_fraction = 0.25;
  spec.seed = 6;
  PairDataset data = generate_synthetic_pairs(spec).data;
  TrainConfig tc;
  tc.seed = 3;
  EmbeddingModel f = train(EmbeddingModel::base(), data, tc);
  REQUIRE(!f.overrides().empty());

  fs::path p = fs::temp_directory_path() / "eagle-model-rt.bin";
  f.save(p);
  EmbeddingModel back = EmbeddingModel::load(p);
  CHECK(back.params_equal(f));
  CHECK(back.dims() == f.dims());
  CHECK(back.id() == f.id());
  REQUIRE(back.provenance().size() == f.provenance().size());
  for (size_t i = 0; i < f.provenance().size(); ++i) {
    CHECK(back.provenance()[i].kind == f.provenance()[i].kind);
    CHECK(back.provenance()[i].id == f.provenance()[i].id);
    CHECK(back.provenance()[i].parent == f.provenance()[i].parent);
    CHECK(back.provenance()[i].train_config_hash ==
          f.provenance()[i].train_config_hash);
    CHECK(back.provenance()[i].train_size == f.provenance()[i].train_size);
  }
  // saved twice, identical bytes (row order is canonical)
  fs::path p2 = fs::temp_directory_path() / "eagle-model-rt2.bin";
  f.save(p2);
  CHECK(read_file(p) == read_file(p2));
}

TEST_CASE("train config hash changes with any field") {
  TrainConfig a;
  TrainConfig b = a;
  CHECK(train_config_hash(a) == train_config_hash(b));
  b.learning_rate = 2e-4;
  CHECK(train_config_hash(a) != train_config_hash(b));
  b = a;
  b.epochs = 3;
  CHECK(train_config_hash(a) != train_config_hash(b));
  b = a;
  b.seed = 99;
  CHECK(train_config_hash(a) != train_config_hash(b));
}
