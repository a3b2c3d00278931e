// SPDX-License-Identifier: Apache-2.0

#include "eagle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eagle/errors.hpp"
#include "eagle/rng.hpp"

namespace eagle {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, size_t line,
                             const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string require_string(const json& j, const char* key,
                           const std::filesystem::path& path, size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    parse_fail(path, line, std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

/// Applies `fn(line_number, parsed_json)` to every non-blank line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(path, lineno, e.what());
    }
    if (!j.is_object()) {
      parse_fail(path, lineno, "record is not a JSON object");
    }
    fn(lineno, j);
  }
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    for (const auto& l : lines) {
      out << l << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

const PairExample* PairDataset::find(const std::string& id) const {
  for (const auto& ex : examples) {
    if (ex.id == id) return &ex;
  }
  return nullptr;
}

int SealedPairTruth::require(const std::string& id) const {
  auto it = labels.find(id);
  if (it == labels.end()) {
    throw Error("id not present in sealed truth: " + id);
  }
  return it->second;
}

const std::vector<std::string>& SealedSearchTruth::require(
    const std::string& query_id) const {
  auto it = relevant.find(query_id);
  if (it == relevant.end()) {
    throw Error("query not present in sealed truth: " + query_id);
  }
  return it->second;
}

PairDataset load_pair_dataset(const std::filesystem::path& path) {
  PairDataset ds;
  ds.name = path.stem().string();
  std::set<std::string> seen;
  for_each_record(path, [&](size_t lineno, const json& j) {
    PairExample ex;
    ex.id = require_string(j, "id", path, lineno);
    ex.text_a = require_string(j, "text_a", path, lineno);
    ex.text_b = require_string(j, "text_b", path, lineno);
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer() ||
          (it->get<int64_t>() != 0 && it->get<int64_t>() != 1)) {
        parse_fail(path, lineno, "label must be 0 or 1");
      }
      ex.label = static_cast<int>(it->get<int64_t>());
    }
    if (auto it = j.find("domain"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) {
        parse_fail(path, lineno, "domain must be a string");
      }
      ex.domain = it->get<std::string>();
    }
    if (!seen.insert(ex.id).second) {
      parse_fail(path, lineno, "duplicate id '" + ex.id + "'");
    }
    ds.examples.push_back(std::move(ex));
  });
  return ds;
}

void save_pair_dataset(const PairDataset& ds,
                       const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    ordered_json j;
    j["id"] = ex.id;
    j["text_a"] = ex.text_a;
    j["text_b"] = ex.text_b;
    if (ex.label) j["label"] = *ex.label;
    if (ex.domain) j["domain"] = *ex.domain;
    lines.push_back(j.dump());
  }
  write_lines(path, lines);
}

SearchDataset load_search_dataset(const std::filesystem::path& queries_path,
                                  const std::filesystem::path& labels_path) {
  SearchDataset ds;
  std::set<std::string> label_ids;
  for_each_record(labels_path, [&](size_t lineno, const json& j) {
    Label lbl;
    lbl.id = require_string(j, "id", labels_path, lineno);
    lbl.text = require_string(j, "text", labels_path, lineno);
    if (!label_ids.insert(lbl.id).second) {
      parse_fail(labels_path, lineno, "duplicate label id '" + lbl.id + "'");
    }
    ds.labels.push_back(std::move(lbl));
  });
  if (ds.labels.empty()) {
    throw Error("label corpus is empty: " + labels_path.string());
  }

  std::set<std::string> query_ids;
  for_each_record(queries_path, [&](size_t lineno, const json& j) {
    SearchQuery q;
    q.id = require_string(j, "id", queries_path, lineno);
    q.text = require_string(j, "text", queries_path, lineno);
    if (auto it = j.find("domain"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) {
        parse_fail(queries_path, lineno, "domain must be a string");
      }
      q.domain = it->get<std::string>();
    }
    if (auto it = j.find("relevant"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) {
        parse_fail(queries_path, lineno, "relevant must be an array of label ids");
      }
      std::vector<std::string> rel;
      for (const auto& r : *it) {
        if (!r.is_string()) {
          parse_fail(queries_path, lineno, "relevant entries must be strings");
        }
        std::string rid = r.get<std::string>();
        if (!label_ids.count(rid)) {
          throw Error("query " + q.id + ": relevant label id \"" + rid +
                      "\" unknown");
        }
        rel.push_back(std::move(rid));
      }
      q.relevant = std::move(rel);
    }
    if (!query_ids.insert(q.id).second) {
      parse_fail(queries_path, lineno, "duplicate query id '" + q.id + "'");
    }
    ds.queries.push_back(std::move(q));
  });
  return ds;
}

void save_search_dataset(const SearchDataset& ds,
                         const std::filesystem::path& queries_path,
                         const std::filesystem::path& labels_path) {
  std::vector<std::string> lines;
  for (const auto& q : ds.queries) {
    ordered_json j;
    j["id"] = q.id;
    j["text"] = q.text;
    if (q.domain) j["domain"] = *q.domain;
    if (q.relevant) j["relevant"] = *q.relevant;
    lines.push_back(j.dump());
  }
  write_lines(queries_path, lines);

  lines.clear();
  for (const auto& l : ds.labels) {
    ordered_json j;
    j["id"] = l.id;
    j["text"] = l.text;
    lines.push_back(j.dump());
  }
  write_lines(labels_path, lines);
}

SealedPairTruth load_sealed_truth(const std::filesystem::path& path) {
  SealedPairTruth truth;
  for_each_record(path, [&](size_t lineno, const json& j) {
    std::string id = require_string(j, "id", path, lineno);
    auto it = j.find("label");
    if (it == j.end() || !it->is_number_integer() ||
        (it->get<int64_t>() != 0 && it->get<int64_t>() != 1)) {
      parse_fail(path, lineno, "label must be 0 or 1");
    }
    truth.labels[id] = static_cast<int>(it->get<int64_t>());
  });
  return truth;
}

void save_sealed_truth(const SealedPairTruth& truth,
                       const std::filesystem::path& path) {
  std::vector<std::pair<std::string, int>> rows(truth.labels.begin(),
                                                truth.labels.end());
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> lines;
  lines.reserve(rows.size());
  for (const auto& [id, label] : rows) {
    ordered_json j;
    j["id"] = id;
    j["label"] = label;
    lines.push_back(j.dump());
  }
  write_lines(path, lines);
}

ExtremePartition extreme_partition(
    const std::vector<std::pair<std::string, double>>& id_errors,
    double fraction) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw Error("target fraction must lie in [0,1]");
  }
  std::vector<std::pair<double, std::string>> ranked;
  ranked.reserve(id_errors.size());
  for (const auto& [id, err] : id_errors) {
    ranked.emplace_back(err, id);
  }
  std::sort(ranked.begin(), ranked.end());

  size_t n = ranked.size();
  size_t n_target =
      static_cast<size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  size_t n_easy = n_target / 2;
  size_t n_hard = n_target - n_easy;  // remainder goes to the hard side

  ExtremePartition part;
  part.easy_ids.reserve(n_easy);
  for (size_t i = 0; i < n_easy; ++i) {
    part.easy_ids.push_back(ranked[i].second);
  }
  part.hard_ids.reserve(n_hard);
  for (size_t i = n - n_hard; i < n; ++i) {
    part.hard_ids.push_back(ranked[i].second);
  }
  return part;
}

SplitResult make_extreme_split(
    const PairDataset& dataset,
    const std::unordered_map<std::string, double>& base_scores,
    double target_fraction) {
  std::vector<std::pair<std::string, double>> id_errors;
  id_errors.reserve(dataset.size());
  for (const auto& ex : dataset.examples) {
    if (!ex.label) {
      throw Error("make_extreme_split requires labels; example " + ex.id +
                  " is unlabeled");
    }
    auto it = base_scores.find(ex.id);
    if (it == base_scores.end()) {
      throw Error("no base score for example " + ex.id);
    }
    double e = it->second - static_cast<double>(*ex.label);
    id_errors.emplace_back(ex.id, e * e);
  }
  ExtremePartition part = extreme_partition(id_errors, target_fraction);

  std::set<std::string> target_ids(part.easy_ids.begin(), part.easy_ids.end());
  target_ids.insert(part.hard_ids.begin(), part.hard_ids.end());

  SplitResult result;
  result.source_labeled.name = dataset.name + ":source";
  result.target_unlabeled.name = dataset.name + ":target";
  for (const auto& ex : dataset.examples) {
    if (target_ids.count(ex.id)) {
      PairExample unlabeled = ex;
      result.sealed.labels[ex.id] = *ex.label;
      unlabeled.label.reset();
      result.target_unlabeled.examples.push_back(std::move(unlabeled));
    } else {
      result.source_labeled.examples.push_back(ex);
    }
  }
  return result;
}

namespace {

constexpr uint64_t kTokenSalt = 0x70a1b2c3d4e5f601ULL;

std::string render_word(uint64_t bits, size_t len) {
  std::string w(len, 'a');
  for (char& c : w) {
    c = static_cast<char>('a' + bits % 26);
    bits /= 26;
  }
  return w;
}

/// Vocabulary is a pure function of the index so that datasets generated
/// with different seeds (train vs test) share tokens and markers. Marker
/// tokens (the leading indices) are rendered longer than content tokens so
/// a marker phrase carries a sizable share of a sentence's n-gram mass.
std::vector<std::string> build_vocab(size_t vocab_size, size_t n_marker_tokens) {
  std::vector<std::string> vocab;
  vocab.reserve(vocab_size);
  std::set<std::string> used;
  for (size_t i = 0; i < vocab_size; ++i) {
    size_t len = i < n_marker_tokens ? 12 : 6;
    for (uint64_t salt = 0;; ++salt) {
      std::string w = render_word(hash_u64(kTokenSalt, i, salt), len);
      if (used.insert(w).second) {
        vocab.push_back(std::move(w));
        break;
      }
    }
  }
  return vocab;
}

std::vector<size_t> sample_distinct(SplitMix64& rng, size_t count, size_t lo,
                                    size_t hi,
                                    const std::set<size_t>& exclude) {
  std::vector<size_t> out;
  std::set<size_t> taken;
  while (out.size() < count) {
    size_t v = lo + static_cast<size_t>(rng.next_below(hi - lo));
    if (exclude.count(v) || !taken.insert(v).second) continue;
    out.push_back(v);
  }
  return out;
}

struct Band {
  size_t lo = 0;
  size_t hi = 0;  // inclusive

  bool valid() const { return lo <= hi; }
  size_t draw(SplitMix64& rng) const { return lo + rng.next_below(hi - lo + 1); }
  // two draws, keep the lower / higher: biases flips toward the extremes
  size_t draw_low(SplitMix64& rng) const { return std::min(draw(rng), draw(rng)); }
  size_t draw_high(SplitMix64& rng) const { return std::max(draw(rng), draw(rng)); }
};

struct GenPlan {
  size_t n_phrases = 0;    // per lexicon
  size_t syn_len = 0;      // tokens per shared (flip-to-1) phrase
  size_t damp_len = 0;     // tokens per one-side (flip-to-0) phrase
  size_t content_begin = 0;
  size_t m = 0;            // content tokens per side
  Band clean_high, clean_low, flip_high, flip_low;  // shared-token counts
};

/// Overlap is measured over final distinct token sets. Every group's band
/// spans the full k range that keeps its overlap on the correct side of
/// both the label threshold and the 0.5 boundary the scorer-error
/// invariant needs (margin 0.02):
///   clean-high: k/m          in (max(theta,.5), 1)
///   clean-low:  k/m          in [0, min(theta,.5))
///   flip-high:  k/(m+D)      in (max(theta,.5), 1)   (label negated to 0)
///   flip-low:   (k+S)/(m+S)  in [0, min(theta,.5))   (label negated to 1)
/// Wide bands matter: flips near the 0.5 line have moderate base error and
/// survive an extreme split inside the labeled source, which is what lets
/// a finetuned model meet the marker phrases before scoring the pool.
/// Phrase lengths shrink until the constraints are satisfiable.
GenPlan plan_generation(const SyntheticSpec& spec) {
  GenPlan plan;
  plan.n_phrases = std::clamp<size_t>(spec.vocab_size / 40, 1, 12);
  const double theta_hi = std::max(spec.overlap_threshold, 0.5);
  const double theta_lo = std::min(spec.overlap_threshold, 0.5);
  const double margin = 0.02;

  auto high_band = [&](size_t m, size_t extra, size_t k_floor) {
    // smallest k with k/(m+extra) > theta_hi + margin, up to m-1
    Band band;
    band.lo = m;  // invalid until proven otherwise
    band.hi = m - 1;
    for (size_t k = k_floor; k < m; ++k) {
      if (static_cast<double>(k) / static_cast<double>(m + extra) >
          theta_hi + margin) {
        band.lo = k;
        break;
      }
    }
    return band;
  };
  auto low_band = [&](size_t m, size_t extra, size_t k_floor) {
    // largest k with (k+extra)/(m+extra) < theta_lo - margin
    Band band;
    band.lo = k_floor;
    band.hi = 0;
    bool found = false;
    for (size_t k = m; k-- > k_floor;) {
      if (static_cast<double>(k + extra) / static_cast<double>(m + extra) <
          theta_lo - margin) {
        band.hi = k;
        found = true;
        break;
      }
      if (k == k_floor) break;
    }
    if (!found) band.hi = band.lo > 0 ? band.lo - 1 : (band.lo = 1, 0);
    return band;
  };

  for (size_t syn_len : {3, 2, 1, 0}) {
    for (size_t damp_len : {3, 2, 1, 0}) {
      if (damp_len > syn_len && syn_len > 0) continue;
      size_t reserved = plan.n_phrases * (3 + 3);
      if (syn_len == 0 && damp_len == 0) reserved = 0;
      if (reserved + 6 > spec.vocab_size) continue;
      size_t content = spec.vocab_size - reserved;
      size_t m = std::max<size_t>(3, std::min<size_t>(12, content / 2));
      size_t avail = content - m;  // fresh tokens for the B side
      size_t avail_floor = m > avail ? m - avail : 0;
      // clean lows keep a nonzero overlap floor so the score-vs-label
      // pressure of the two regimes stays roughly balanced in finetuning;
      // flips span their whole legal range so their base errors form a
      // spectrum (mild ones survive the split inside the labeled source)
      size_t clean_floor = std::max(avail_floor, static_cast<size_t>(m / 3));

      Band clean_high = high_band(m, 0, clean_floor);
      Band clean_low = low_band(m, 0, clean_floor);
      Band flip_high = high_band(m, damp_len, avail_floor);
      Band flip_low = low_band(m, syn_len, avail_floor);
      if (clean_high.valid() && clean_low.valid() && flip_high.valid() &&
          flip_low.valid()) {
        plan.syn_len = syn_len;
        plan.damp_len = damp_len;
        plan.content_begin = reserved;
        plan.m = m;
        plan.clean_high = clean_high;
        plan.clean_low = clean_low;
        plan.flip_high = flip_high;
        plan.flip_low = flip_low;
        return plan;
      }
    }
  }
  throw Error("synthetic spec unsatisfiable: overlap_threshold " +
              std::to_string(spec.overlap_threshold) + " with vocab_size " +
              std::to_string(spec.vocab_size));
}

}  // namespace

SyntheticDataset generate_synthetic_pairs(const SyntheticSpec& spec) {
  if (spec.vocab_size < 10) {
    throw Error("synthetic vocab_size must be >= 10");
  }
  if (spec.n_pairs < 1) {
    throw Error("synthetic n_pairs must be >= 1");
  }
  if (spec.flip_fraction < 0.0 || spec.flip_fraction > 1.0) {
    throw Error("flip_fraction must lie in [0,1]");
  }

  const GenPlan plan = plan_generation(spec);
  const std::vector<std::string> vocab =
      build_vocab(spec.vocab_size, plan.content_begin);
  // syn phrase p: tokens [3p, 3p+syn_len); damp phrase q: tokens
  // [3*n_phrases + 3q, ... + damp_len) — disjoint lexicons
  const size_t damp_base = 3 * plan.n_phrases;

  // Flip membership: exactly floor(flip_fraction * n) indices.
  const size_t n_flips = static_cast<size_t>(
      std::floor(spec.flip_fraction * static_cast<double>(spec.n_pairs)));
  std::vector<size_t> order(spec.n_pairs);
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 flip_rng(hash_u64(spec.seed, 0xf11bULL));
  deterministic_shuffle(std::span<size_t>(order), flip_rng);
  std::vector<char> flipped(spec.n_pairs, 0);
  for (size_t i = 0; i < n_flips; ++i) flipped[order[i]] = 1;

  SyntheticDataset out;
  out.data.name = "synthetic";
  out.data.examples.reserve(spec.n_pairs);

  const size_t m = plan.m;
  size_t id_width = std::max<size_t>(6, std::to_string(spec.n_pairs).size());
  for (size_t i = 0; i < spec.n_pairs; ++i) {
    SplitMix64 rng(hash_u64(spec.seed, 0x9a1e5ULL, i));
    bool high = rng.next_below(2) == 0;
    // High-regime flips are plain label noise two times out of five: the
    // lexically-similar-yet-unrelated pairs every similarity corpus has.
    // They carry no marker phrase, so nothing transfers from annotating
    // them. All other flips are realized by marker phrases.
    bool structured = flipped[i] && plan.syn_len > 0 &&
                      !(high && rng.next_below(5) < 2);
    size_t k;
    if (structured) {
      k = high ? plan.flip_high.draw_high(rng) : plan.flip_low.draw_low(rng);
    } else if (flipped[i]) {
      k = plan.clean_high.draw_low(rng);  // noise flips sit near the line
    } else {
      k = (high ? plan.clean_high : plan.clean_low).draw(rng);
    }

    std::vector<size_t> a_tokens =
        sample_distinct(rng, m, plan.content_begin, spec.vocab_size, {});
    std::vector<size_t> shared(a_tokens.begin(), a_tokens.end());
    deterministic_shuffle(std::span<size_t>(shared), rng);
    shared.resize(k);
    std::set<size_t> a_set(a_tokens.begin(), a_tokens.end());
    std::vector<size_t> b_tokens = shared;
    std::vector<size_t> fresh =
        sample_distinct(rng, m - k, plan.content_begin, spec.vocab_size, a_set);
    b_tokens.insert(b_tokens.end(), fresh.begin(), fresh.end());
    deterministic_shuffle(std::span<size_t>(a_tokens), rng);
    deterministic_shuffle(std::span<size_t>(b_tokens), rng);

    auto insert_phrase = [&](std::vector<size_t>& side, size_t base,
                             size_t len) {
      size_t pos = rng.next_below(side.size() + 1);
      for (size_t t = 0; t < len; ++t) {
        side.insert(side.begin() + static_cast<long>(pos + t), base + t);
      }
    };

    double overlap = static_cast<double>(k) / static_cast<double>(m);
    int label;
    std::string domain;
    if (flipped[i]) {
      size_t phrase = rng.next_below(plan.n_phrases);
      if (!structured) {
        label = 1 - (overlap > spec.overlap_threshold ? 1 : 0);
      } else if (high) {
        // One-side damp phrase: the cue that the pair is not a duplicate
        // despite the shared content tokens.
        insert_phrase(a_tokens, damp_base + 3 * phrase, plan.damp_len);
        overlap = static_cast<double>(k) /
                  static_cast<double>(m + plan.damp_len);
        label = 0;
      } else {
        // Shared syn phrase: the cue that the pair is a duplicate despite
        // low content overlap.
        insert_phrase(a_tokens, 3 * phrase, plan.syn_len);
        insert_phrase(b_tokens, 3 * phrase, plan.syn_len);
        overlap = static_cast<double>(k + plan.syn_len) /
                  static_cast<double>(m + plan.syn_len);
        label = 1;
      }
      domain = "d" + std::to_string(2 + rng.next_below(2));
    } else {
      label = overlap > spec.overlap_threshold ? 1 : 0;
      domain = "d" + std::to_string(rng.next_below(4));
    }

    auto join = [&](const std::vector<size_t>& toks) {
      std::string s;
      for (size_t t : toks) {
        if (!s.empty()) s.push_back(' ');
        s += vocab[t];
      }
      return s;
    };

    PairExample ex;
    std::string num = std::to_string(i);
    ex.id = "p" + std::string(id_width - num.size(), '0') + num;
    ex.text_a = join(a_tokens);
    ex.text_b = join(b_tokens);
    ex.label = label;
    ex.domain = domain;
    out.meta[ex.id] = GenMeta{flipped[i] != 0, overlap, structured};
    out.data.examples.push_back(std::move(ex));
  }
  return out;
}

void save_synthetic_meta(const SyntheticDataset& ds,
                         const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(ds.data.examples.size());
  for (const auto& ex : ds.data.examples) {
    const GenMeta& meta = ds.meta.at(ex.id);
    ordered_json j;
    j["id"] = ex.id;
    j["flipped"] = meta.flipped;
    j["overlap"] = meta.overlap;
    j["structured"] = meta.structured;
    lines.push_back(j.dump());
  }
  write_lines(path, lines);
}

}  // namespace eagle
