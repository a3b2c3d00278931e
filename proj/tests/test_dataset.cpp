// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "eagle/dataset.hpp"
#include "eagle/errors.hpp"
#include "eagle/io.hpp"
#include "eagle/rng.hpp"

using namespace eagle;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "eagle-dataset-tests";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path p = temp_dir() / name;
  atomic_write(p, content);
  return p;
}

}  // namespace

TEST_CASE("load preserves order of a well-formed file") {
  fs::path p = write_temp("ok.jsonl",
      R"({"id":"a","text_a":"x","text_b":"y","label":1})" "\n"
      R"({"id":"b","text_a":"u","text_b":"v"})" "\n"
      R"({"id":"c","text_a":"s","text_b":"t","label":0,"domain":"d1"})" "\n");
  PairDataset ds = load_pair_dataset(p);
  REQUIRE(ds.size() == 3);
  CHECK(ds.examples[0].id == "a");
  CHECK(ds.examples[1].id == "b");
  CHECK(!ds.examples[1].label.has_value());
  CHECK(ds.examples[2].domain == "d1");
}

TEST_CASE("label outside {0,1} is a parse error naming the line") {
  fs::path p = write_temp("badlabel.jsonl",
      R"({"id":"a","text_a":"x","text_b":"y","label":1})" "\n"
      R"({"id":"b","text_a":"x","text_b":"y","label":2})" "\n");
  try {
    load_pair_dataset(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("empty file loads as an empty dataset") {
  fs::path p = write_temp("empty.jsonl", "");
  CHECK(load_pair_dataset(p).size() == 0);
}

TEST_CASE("duplicate ids are rejected") {
  fs::path p = write_temp("dup.jsonl",
      R"({"id":"a","text_a":"x","text_b":"y"})" "\n"
      R"({"id":"a","text_a":"u","text_b":"v"})" "\n");
  CHECK_THROWS_AS(load_pair_dataset(p), ParseError);
}

TEST_CASE("pair dataset write/load round trip is field-exact") {
  PairDataset ds;
  ds.name = "rt";
  ds.examples = {
      {"x1", "first text", "second text", 1, std::nullopt},
      {"x2", "hello", "world", std::nullopt, std::string("dom")},
      {"x3", "with \"quotes\"", "and\nnewline", 0, std::nullopt},
  };
  fs::path p = temp_dir() / "rt.jsonl";
  save_pair_dataset(ds, p);
  PairDataset back = load_pair_dataset(p);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.examples[i].id == ds.examples[i].id);
    CHECK(back.examples[i].text_a == ds.examples[i].text_a);
    CHECK(back.examples[i].text_b == ds.examples[i].text_b);
    CHECK(back.examples[i].label == ds.examples[i].label);
    CHECK(back.examples[i].domain == ds.examples[i].domain);
  }
}

TEST_CASE("search dataset loads and validates relevance ids") {
  fs::path lp = write_temp("labels.jsonl",
      R"({"id":"L1","text":"one"})" "\n"
      R"({"id":"L2","text":"two"})" "\n"
      R"({"id":"L3","text":"three"})" "\n"
      R"({"id":"L4","text":"four"})" "\n"
      R"({"id":"L5","text":"five"})" "\n");
  fs::path qp = write_temp("queries.jsonl",
      R"({"id":"q1","text":"alpha","relevant":["L1","L3"]})" "\n"
      R"({"id":"q2","text":"beta","relevant":[]})" "\n");
  SearchDataset ds = load_search_dataset(qp, lp);
  CHECK(ds.queries.size() == 2);
  CHECK(ds.labels.size() == 5);
  CHECK(ds.queries[1].relevant->empty());  // unlabeled query accepted

  fs::path bad = write_temp("badq.jsonl",
      R"({"id":"q9","text":"gamma","relevant":["L99"]})" "\n");
  try {
    load_search_dataset(bad, lp);
    FAIL("expected error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("L99") != std::string::npos);
    CHECK(msg.find("q9") != std::string::npos);
  }
}

TEST_CASE("empty label corpus is rejected") {
  fs::path lp = write_temp("nolabels.jsonl", "");
  fs::path qp = write_temp("noqueries.jsonl", "");
  CHECK_THROWS_AS(load_search_dataset(qp, lp), Error);
}

TEST_CASE("extreme split worked example") {
  PairDataset ds;
  std::vector<double> errors = {0.00, 0.01, 0.04, 0.25, 0.49, 0.81};
  std::unordered_map<std::string, double> scores;
  for (size_t i = 0; i < errors.size(); ++i) {
    std::string id = "e" + std::to_string(i);
    // label 0 everywhere, so base_score = sqrt(error)
    ds.examples.push_back({id, "a", "b", 0, std::nullopt});
    scores[id] = std::sqrt(errors[i]);
  }
  SplitResult split = make_extreme_split(ds, scores, 0.6);

  std::set<std::string> target;
  for (const auto& ex : split.target_unlabeled.examples) target.insert(ex.id);
  CHECK(target == std::set<std::string>{"e0", "e1", "e4", "e5"});

  std::set<std::string> source;
  for (const auto& ex : split.source_labeled.examples) source.insert(ex.id);
  CHECK(source == std::set<std::string>{"e2", "e3"});

  // labels withheld from the target, retained in the sealed map
  for (const auto& ex : split.target_unlabeled.examples) {
    CHECK(!ex.label.has_value());
    CHECK(split.sealed.require(ex.id) == 0);
  }
}

TEST_CASE("fraction 0 keeps everything in the source") {
  PairDataset ds;
  std::unordered_map<std::string, double> scores;
  for (int i = 0; i < 10; ++i) {
    std::string id = "p" + std::to_string(i);
    ds.examples.push_back({id, "a", "b", i % 2, std::nullopt});
    scores[id] = 0.1 * i;
  }
  SplitResult split = make_extreme_split(ds, scores, 0.0);
  CHECK(split.source_labeled.size() == 10);
  CHECK(split.target_unlabeled.size() == 0);
}

TEST_CASE("split rejects bad fraction and unlabeled input") {
  PairDataset ds;
  ds.examples.push_back({"a", "x", "y", 1, std::nullopt});
  std::unordered_map<std::string, double> scores = {{"a", 0.5}};
  CHECK_THROWS_AS(make_extreme_split(ds, scores, 1.5), Error);
  ds.examples[0].label.reset();
  CHECK_THROWS_AS(make_extreme_split(ds, scores, 0.5), Error);
}

TEST_CASE("38400 pairs at fraction 0.6 give a 23040 target") {
  std::vector<std::pair<std::string, double>> errors;
  SplitMix64 rng(1);
  errors.reserve(38400);
  for (size_t i = 0; i < 38400; ++i) {
    errors.emplace_back("p" + std::to_string(i), rng.next_double());
  }
  ExtremePartition part = extreme_partition(errors, 0.6);
  CHECK(part.easy_ids.size() + part.hard_ids.size() == 23040);
}

TEST_CASE("split partition property over random instances") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 1 + rng.next_below(40);
    double fraction = rng.next_double();
    PairDataset ds;
    std::unordered_map<std::string, double> scores;
    for (size_t i = 0; i < n; ++i) {
      std::string id = "r" + std::to_string(i);
      ds.examples.push_back({id, "a", "b", static_cast<int>(rng.next_below(2)),
                             std::nullopt});
      scores[id] = rng.next_double();
    }
    SplitResult split = make_extreme_split(ds, scores, fraction);
    // disjoint union equals the input
    std::set<std::string> seen;
    for (const auto& ex : split.source_labeled.examples) {
      CHECK(seen.insert(ex.id).second);
    }
    for (const auto& ex : split.target_unlabeled.examples) {
      CHECK(seen.insert(ex.id).second);
    }
    CHECK(seen.size() == n);
    // target size within one of fraction * n
    double want = fraction * static_cast<double>(n);
    CHECK(std::abs(static_cast<double>(split.target_unlabeled.size()) - want) <=
          1.0);
  }
}

TEST_CASE("split assignment is invariant to input permutation") {
  SplitMix64 rng(5);
  PairDataset ds;
  std::unordered_map<std::string, double> scores;
  for (size_t i = 0; i < 25; ++i) {
    std::string id = "m" + std::to_string(i);
    ds.examples.push_back({id, "a", "b", static_cast<int>(rng.next_below(2)),
                           std::nullopt});
    // deliberate ties in the error values
    scores[id] = 0.25 * static_cast<double>(rng.next_below(4));
  }
  SplitResult base = make_extreme_split(ds, scores, 0.5);
  std::set<std::string> base_target;
  for (const auto& ex : base.target_unlabeled.examples) {
    base_target.insert(ex.id);
  }

  PairDataset shuffled = ds;
  deterministic_shuffle(std::span<PairExample>(shuffled.examples), rng);
  SplitResult again = make_extreme_split(shuffled, scores, 0.5);
  std::set<std::string> again_target;
  for (const auto& ex : again.target_unlabeled.examples) {
    again_target.insert(ex.id);
  }
  CHECK(base_target == again_target);
}

TEST_CASE("synthetic generation is deterministic byte for byte") {
  SyntheticSpec spec;
  spec.n_pairs = 200;
  spec.vocab_size = 80;
  spec.flip_fraction = 0.25;
  spec.seed = 11;
  SyntheticDataset a = generate_synthetic_pairs(spec);
  SyntheticDataset b = generate_synthetic_pairs(spec);
  fs::path pa = temp_dir() / "synth_a.jsonl";
  fs::path pb = temp_dir() / "synth_b.jsonl";
  save_pair_dataset(a.data, pa);
  save_pair_dataset(b.data, pb);
  CHECK(read_file(pa) == read_file(pb));
}

TEST_CASE("synthetic flip count is exactly floor(flip_fraction * n)") {
  SyntheticSpec spec;
  spec.n_pairs = 1000;
  spec.vocab_size = 100;
  spec.flip_fraction = 0.3;
  spec.seed = 3;
  SyntheticDataset ds = generate_synthetic_pairs(spec);
  size_t flips = 0;
  for (const auto& [id, meta] : ds.meta) {
    if (meta.flipped) ++flips;
  }
  CHECK(flips == 300);
}

TEST_CASE("flip_fraction 0 labels follow the overlap rule everywhere") {
  SyntheticSpec spec;
  spec.n_pairs = 300;
  spec.vocab_size = 90;
  spec.flip_fraction = 0.0;
  spec.seed = 21;
  SyntheticDataset ds = generate_synthetic_pairs(spec);
  for (const auto& ex : ds.data.examples) {
    const GenMeta& meta = ds.meta.at(ex.id);
    CHECK(!meta.flipped);
    CHECK(*ex.label == (meta.overlap > spec.overlap_threshold ? 1 : 0));
  }
}

TEST_CASE("overlap scorer error separates flipped from clean by construction") {
  for (size_t vocab : {10, 24, 64, 120, 320}) {
    SyntheticSpec spec;
    spec.n_pairs = 400;
    spec.vocab_size = vocab;
    spec.flip_fraction = 0.3;
    spec.seed = 17;
    SyntheticDataset ds = generate_synthetic_pairs(spec);
    for (const auto& ex : ds.data.examples) {
      const GenMeta& meta = ds.meta.at(ex.id);
      double err = meta.overlap - static_cast<double>(*ex.label);
      double sq = err * err;
      if (meta.flipped) {
        CHECK(sq > 0.25);
      } else {
        CHECK(sq < 0.25);
      }
      // recorded overlap matches the actual token sets
      auto tokens = [](const std::string& text) {
        std::set<std::string> out;
        size_t start = 0;
        while (start < text.size()) {
          size_t space = text.find(' ', start);
          if (space == std::string::npos) space = text.size();
          out.insert(text.substr(start, space - start));
          start = space + 1;
        }
        return out;
      };
      std::set<std::string> a = tokens(ex.text_a);
      std::set<std::string> b = tokens(ex.text_b);
      std::vector<std::string> shared;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::back_inserter(shared));
      double o = static_cast<double>(shared.size()) /
                 static_cast<double>(std::max(a.size(), b.size()));
      CHECK(meta.overlap == doctest::Approx(o).epsilon(1e-12));
    }
  }
}

TEST_CASE("synthetic generator enforces preconditions") {
  SyntheticSpec spec;
  spec.n_pairs = 10;
  spec.vocab_size = 9;
  CHECK_THROWS_AS(generate_synthetic_pairs(spec), Error);
  spec.vocab_size = 50;
  spec.n_pairs = 0;
  CHECK_THROWS_AS(generate_synthetic_pairs(spec), Error);
  spec.n_pairs = 10;
  spec.flip_fraction = 1.5;
  CHECK_THROWS_AS(generate_synthetic_pairs(spec), Error);
}

TEST_CASE("sealed truth round trips") {
  SealedPairTruth truth;
  truth.labels = {{"a", 1}, {"b", 0}, {"c", 1}};
  fs::path p = temp_dir() / "truth.jsonl";
  save_sealed_truth(truth, p);
  SealedPairTruth back = load_sealed_truth(p);
  CHECK(back.labels == truth.labels);
  CHECK(back.require("a") == 1);
  CHECK_THROWS_AS(back.require("zz"), Error);
}
