// SPDX-License-Identifier: Apache-2.0

#include "eagle/annotate.hpp"

#include <algorithm>
#include <regex>

#include "eagle/errors.hpp"
#include "eagle/hashing.hpp"
#include "eagle/rng.hpp"

namespace eagle {

namespace {

// Annotation prompt templates. These are versioned text assets pinned
// byte-for-byte by golden-file tests; do not reflow or "fix" whitespace.

constexpr const char* kPairSystemPrompt =
    "You are an expert in judging the intended answer for short questions on "
    "quora. You use the intended answer to find duplicate questions (i.e. "
    "questions having the same intended answer and answering one of the "
    "questions will answer the other question too.\n"
    "Given a pair of questions from one of these forums you are effectively "
    "able to discern if they are duplicates of each other or not by reasoning "
    "about the intended answer.";

constexpr const char* kPairUserPrefix =
    "Given pairs of questions from (say) Quora, output the pair of questions "
    "that are asking the same question (i.e. have the same intended answer). "
    "Reason about the intended answer to solve this.\n"
    "Here is an example of output \"Pair1\".\n"
    "\n";

constexpr const char* kPairUserTrailer = "Pairs having duplicates are :";

constexpr const char* kWikiSystemPrompt =
    "You are an expert on United States centric Wikipedia articles and "
    "article titles. You are able to infer the content and context of an "
    "article accurately from the title of the article alone. Also, given a "
    "reference article title, you are able to accurately discern which "
    "articles should be in the 'SeeAlso' section of the reference article's "
    "wikipedia page.";

constexpr const char* kWikiUserPrefix =
    "You are given the main article title and titles for possible \"SeeAlso\" "
    "articles. You have to output which <SeeAlsoArticle> is most likely to be "
    "in the \"SeeAlso\" section of the main article.\n"
    "The topics of the articles are around or relating to United States "
    "somehow. \n"
    "You should infer the content of the articles from their titles and "
    "output SeeAlso articles are closely related to the main article's topic "
    "and provide additional useful information to the reader. \n"
    "SeeAlso articles should also help readers explore related areas and "
    "should have value to the reader. \n"
    "Output just the article id (e.g. SeeAlsoArticle1) for the most likely "
    "article. Here is an example of output \"SeeAlsoArticle1\". \n"
    "\n";

constexpr const char* kWikiQuerySlot = "MainArticleTitle";
constexpr const char* kWikiLabelSlot = "SeeAlsoArticle";
constexpr const char* kWikiUserTrailer =
    "Most likely <SeeAlsoArticle> to be in \"SeeAlso\" section is :";

constexpr const char* kBooksSystemPrompt =
    "You are an expert on relevance (/similarity) between books sold on "
    "e-commerce websites. Given a reference book, you are able to accurately "
    "discern the relevance of other books to the reference book.";

constexpr const char* kKitchenSystemPrompt =
    "You are an expert on 'Kitchen and Dining' products sold on e-commerce "
    "websites and on judging their utility to a customer. Given a product "
    "bought from e-commerce website, you are able to accurately discern the "
    "relevance of other products to the customer.";

constexpr const char* kAmazonUserPrefix =
    "Given a product a customer has recently bought and a list of 10 possible "
    "products, output (product id of) which product is most relevant for the "
    "customer. \n"
    "Relevant products have similar/complementary use cases. Here is an "
    "example of output \"Product1\".\n"
    "\n"
    "Question\n";

constexpr const char* kAmazonQuerySlot = "BoughtProduct";
constexpr const char* kAmazonLabelSlot = "Product";
constexpr const char* kAmazonUserTrailer = "Most relevant product is :";

double accuracy_for(const NoiseProfile& profile, const std::string& id,
                    const std::unordered_map<std::string, int>& quantile_of) {
  if (profile.per_quantile.empty()) {
    return profile.default_accuracy;
  }
  auto qit = quantile_of.find(id);
  if (qit == quantile_of.end()) {
    throw Error("no quantile index for id " + id);
  }
  auto ait = profile.per_quantile.find(qit->second);
  if (ait == profile.per_quantile.end()) {
    throw Error("no accuracy configured for quantile " +
                std::to_string(qit->second));
  }
  return ait->second;
}

/// Order-independent Bernoulli draw keyed by (seed, id).
double unit_draw(uint64_t seed, const std::string& id, uint64_t salt) {
  SplitMix64 rng(hash_u64(seed, fnv1a64(id), salt));
  return rng.next_double();
}

}  // namespace

std::vector<AnnotationRecord> annotate_gt_pairs(
    const std::vector<std::string>& ids, const SealedPairTruth& truth) {
  std::vector<AnnotationRecord> records;
  records.reserve(ids.size());
  for (const auto& id : ids) {
    AnnotationRecord rec;
    rec.id = id;
    rec.pair_label = truth.require(id);
    rec.annotator = "gt";
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AnnotationRecord> annotate_gt_search(
    const std::vector<SearchCandidates>& items,
    const SealedSearchTruth& truth) {
  std::vector<AnnotationRecord> records;
  records.reserve(items.size());
  for (const auto& item : items) {
    const auto& relevant = truth.require(item.query_id);
    AnnotationRecord rec;
    rec.id = item.query_id;
    rec.annotator = "gt";
    for (const auto& label : item.filtered) {
      bool rel = std::find(relevant.begin(), relevant.end(), label.id) !=
                 relevant.end();
      rec.search_assignment[label.id] = rel ? 1 : 0;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AnnotationRecord> annotate_simulated_pairs(
    const std::vector<std::string>& ids, const SealedPairTruth& truth,
    const NoiseProfile& profile,
    const std::unordered_map<std::string, int>& quantile_of, uint64_t seed) {
  std::vector<AnnotationRecord> records;
  records.reserve(ids.size());
  std::string tag = "simulated(seed=" + std::to_string(seed) + ")";
  for (const auto& id : ids) {
    int label = truth.require(id);
    double accuracy = accuracy_for(profile, id, quantile_of);
    bool correct = unit_draw(seed, id, 0xacc0ULL) < accuracy;
    AnnotationRecord rec;
    rec.id = id;
    rec.pair_label = correct ? label : 1 - label;
    rec.annotator = tag;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AnnotationRecord> annotate_simulated_search(
    const std::vector<SearchCandidates>& items, const SealedSearchTruth& truth,
    const NoiseProfile& profile,
    const std::unordered_map<std::string, int>& quantile_of, uint64_t seed) {
  std::vector<AnnotationRecord> records;
  records.reserve(items.size());
  std::string tag = "simulated(seed=" + std::to_string(seed) + ")";
  for (const auto& item : items) {
    const auto& relevant = truth.require(item.query_id);
    auto is_relevant = [&](const std::string& label_id) {
      return std::find(relevant.begin(), relevant.end(), label_id) !=
             relevant.end();
    };

    // the correct single choice is the best-ranked relevant label, if any
    std::optional<size_t> correct_rank;
    for (size_t i = 0; i < item.filtered.size(); ++i) {
      if (is_relevant(item.filtered[i].id)) {
        correct_rank = i;
        break;
      }
    }

    double accuracy = accuracy_for(profile, item.query_id, quantile_of);
    bool correct = unit_draw(seed, item.query_id, 0xacc0ULL) < accuracy;

    std::optional<size_t> chosen;
    if (correct) {
      chosen = correct_rank;
    } else {
      // wrong single-choice options: every non-relevant label, plus "none"
      std::vector<std::optional<size_t>> wrong;
      for (size_t i = 0; i < item.filtered.size(); ++i) {
        if (!correct_rank || i != *correct_rank) wrong.push_back(i);
      }
      wrong.push_back(std::nullopt);
      size_t pick = static_cast<size_t>(
          SplitMix64(hash_u64(seed, fnv1a64(item.query_id), 0x3badULL))
              .next_below(wrong.size()));
      chosen = wrong[pick];
    }

    AnnotationRecord rec;
    rec.id = item.query_id;
    rec.annotator = tag;
    for (size_t i = 0; i < item.filtered.size(); ++i) {
      rec.search_assignment[item.filtered[i].id] =
          (chosen && i == *chosen) ? 1 : 0;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

Prompt build_pair_prompt(std::span<const PairExample> batch) {
  if (batch.empty() || batch.size() > kPairPromptBatch) {
    throw Error("pair prompt batch must hold 1..10 pairs");
  }
  Prompt p;
  p.system = kPairSystemPrompt;
  p.user = kPairUserPrefix;
  for (size_t i = 0; i < batch.size(); ++i) {
    p.user += "Pair" + std::to_string(i + 1) + ": " + batch[i].text_a + "\n" +
              batch[i].text_b + "\n";
  }
  p.user += "\n";
  p.user += kPairUserTrailer;
  return p;
}

PairParse parse_pair_response(std::string_view raw, size_t batch_size) {
  PairParse out;
  out.labels.assign(batch_size, 0);
  static const std::regex token(R"(Pair(\d+))");
  auto begin = std::cregex_iterator(raw.data(), raw.data() + raw.size(), token);
  auto end = std::cregex_iterator();
  size_t hits = 0;
  for (auto it = begin; it != end; ++it) {
    unsigned long k = 0;
    try {
      k = std::stoul((*it)[1].str());
    } catch (const std::exception&) {
      continue;  // absurdly long digit run
    }
    if (k >= 1 && k <= batch_size) {
      out.labels[k - 1] = 1;
      ++hits;
    } else {
      out.warnings.push_back("ignoring out-of-range token Pair" +
                             std::to_string(k));
    }
  }
  if (hits == 0) {
    out.warnings.push_back("no in-range Pair tokens; treating all pairs as "
                           "non-duplicates");
  }
  return out;
}

const char* search_template_name(SearchTemplate t) {
  switch (t) {
    case SearchTemplate::wiki_usa:
      return "wiki-usa";
    case SearchTemplate::amazon_books:
      return "amazon-books";
    case SearchTemplate::amazon_kitchen:
      return "amazon-kitchen";
  }
  return "?";
}

SearchTemplate parse_search_template(const std::string& name) {
  for (SearchTemplate t : {SearchTemplate::wiki_usa, SearchTemplate::amazon_books,
                           SearchTemplate::amazon_kitchen}) {
    if (name == search_template_name(t)) return t;
  }
  throw ConfigError("unknown search prompt template: " + name);
}

Prompt build_search_prompt(const std::string& query_text,
                           std::span<const PromptLabel> labels,
                           SearchTemplate tmpl) {
  if (labels.empty() || labels.size() > kPairPromptBatch) {
    throw Error("search prompt needs 1..10 filtered labels");
  }
  std::vector<const PromptLabel*> ordered;
  ordered.reserve(labels.size());
  for (const auto& l : labels) ordered.push_back(&l);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PromptLabel* a, const PromptLabel* b) {
                     return a->score > b->score;
                   });

  const char* query_slot = kAmazonQuerySlot;
  const char* label_slot = kAmazonLabelSlot;
  Prompt p;
  switch (tmpl) {
    case SearchTemplate::wiki_usa:
      p.system = kWikiSystemPrompt;
      p.user = kWikiUserPrefix;
      query_slot = kWikiQuerySlot;
      label_slot = kWikiLabelSlot;
      break;
    case SearchTemplate::amazon_books:
      p.system = kBooksSystemPrompt;
      p.user = kAmazonUserPrefix;
      break;
    case SearchTemplate::amazon_kitchen:
      p.system = kKitchenSystemPrompt;
      p.user = kAmazonUserPrefix;
      break;
  }

  p.user += std::string(query_slot) + ": " + query_text + "\n";
  for (size_t i = 0; i < ordered.size(); ++i) {
    p.user += std::string(label_slot) + std::to_string(i + 1) + ": " +
              ordered[i]->text + "\n";
  }
  p.user += "\n";
  p.user += tmpl == SearchTemplate::wiki_usa ? kWikiUserTrailer
                                             : kAmazonUserTrailer;
  return p;
}

SearchParse parse_search_response(std::string_view raw, size_t y_size) {
  SearchParse out;
  static const std::regex token(R"((?:Product|SeeAlsoArticle)(\d+))");
  auto begin = std::cregex_iterator(raw.data(), raw.data() + raw.size(), token);
  auto end = std::cregex_iterator();
  for (auto it = begin; it != end; ++it) {
    unsigned long k = 0;
    try {
      k = std::stoul((*it)[1].str());
    } catch (const std::exception&) {
      continue;
    }
    if (k >= 1 && k <= y_size) {
      out.chosen = k - 1;
      return out;
    }
  }
  out.warnings.push_back("no in-range label token; assigning all zeros");
  return out;
}

double annotation_agreement(const std::vector<AnnotationRecord>& records,
                            const SealedPairTruth& truth) {
  if (records.empty()) {
    throw UndefinedMetricError("agreement over zero records");
  }
  size_t agree = 0;
  for (const auto& rec : records) {
    if (!rec.pair_label) {
      throw Error("record " + rec.id + " carries no pair label");
    }
    if (*rec.pair_label == truth.require(rec.id)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(records.size());
}

}  // namespace eagle
