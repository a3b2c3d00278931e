// SPDX-License-Identifier: Apache-2.0

#include "eagle/llm_client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "eagle/hashing.hpp"
#include "eagle/parallel.hpp"

namespace eagle {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must be an http(s) URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string HttpChatTransport::complete(const LlmConfig& config,
                                        const Prompt& prompt) {
  ParsedUrl url = split_url(config.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);

  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env)) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body = {
      {"model", config.model},
      {"temperature", config.temperature},
      {"messages",
       {{{"role", "system"}, {"content", prompt.system}},
        {{"role", "user"}, {"content", prompt.user}}}},
  };

  httplib::Result res =
      client.Post(url.path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + config.endpoint + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw TransportError("server error " + std::to_string(res->status) +
                         " from " + config.endpoint);
  }
  if (res->status != 200) {
    throw Error("request rejected with status " + std::to_string(res->status) +
                ": " + res->body);
  }
  return res->body;
}

std::string extract_message_content(const std::string& body) {
  try {
    json j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed chat-completion body: ") + e.what());
  }
}

LlmClient::LlmClient(LlmConfig config, ChatTransport* transport)
    : config_(std::move(config)), transport_(transport) {
  if (config_.max_inflight < 1) {
    throw ConfigError("max_inflight must be >= 1");
  }
  if (!config_.cache_dir.empty()) {
    std::filesystem::create_directories(config_.cache_dir);
  }
}

std::string LlmClient::cache_key(const std::string& model,
                                 const Prompt& prompt) {
  return sha256_hex(model + prompt.system + "\n" + prompt.user);
}

std::string LlmClient::complete_raw(const Prompt& prompt) {
  std::filesystem::path cache_file;
  if (!config_.cache_dir.empty()) {
    cache_file = config_.cache_dir / cache_key(config_.model, prompt);
    if (std::filesystem::exists(cache_file)) {
      std::ifstream in(cache_file, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }
  }

  std::string body;
  for (int attempt = 0;; ++attempt) {
    try {
      body = transport_->complete(config_, prompt);
      break;
    } catch (const TransportError&) {
      if (attempt + 1 >= config_.max_attempts) throw;
      auto delay = std::chrono::milliseconds(
          static_cast<long>(config_.backoff_base_ms) * (1L << attempt));
      std::this_thread::sleep_for(delay);
    }
  }

  if (!cache_file.empty()) {
    // write-temp-then-rename keeps concurrent writers safe
    std::filesystem::path tmp =
        cache_file.string() + "." + std::to_string(std::rand()) + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
    }
    std::filesystem::rename(tmp, cache_file);
  }
  return body;
}

std::vector<AnnotationRecord> annotate_llm_pairs(
    const std::vector<PairExample>& examples, const LlmConfig& config,
    ChatTransport* transport) {
  LlmClient client(config, transport);

  std::vector<std::span<const PairExample>> batches;
  for (size_t start = 0; start < examples.size(); start += kPairPromptBatch) {
    size_t len = std::min(kPairPromptBatch, examples.size() - start);
    batches.emplace_back(examples.data() + start, len);
  }

  struct BatchResult {
    Prompt prompt;
    std::string body;
  };
  std::vector<BatchResult> results(batches.size());

  run_bounded(batches.size(), static_cast<size_t>(config.max_inflight),
              [&](size_t i) {
    Prompt prompt = build_pair_prompt(batches[i]);
    std::string body;
    try {
      body = client.complete_raw(prompt);
    } catch (const std::exception& e) {
      std::vector<std::string> ids;
      for (const auto& ex : batches[i]) ids.push_back(ex.id);
      throw AnnotationFailedError(
          "batch starting at " + batches[i].front().id + ": " + e.what(),
          std::move(ids));
    }
    results[i] = {std::move(prompt), std::move(body)};
  });

  std::vector<AnnotationRecord> records;
  records.reserve(examples.size());
  std::string tag = "llm(" + config.model + ")";
  for (size_t i = 0; i < batches.size(); ++i) {
    std::string content;
    try {
      content = extract_message_content(results[i].body);
    } catch (const std::exception& e) {
      std::vector<std::string> ids;
      for (const auto& ex : batches[i]) ids.push_back(ex.id);
      throw AnnotationFailedError(
          "batch starting at " + batches[i].front().id + ": " + e.what(),
          std::move(ids));
    }
    PairParse parsed = parse_pair_response(content, batches[i].size());
    for (size_t k = 0; k < batches[i].size(); ++k) {
      AnnotationRecord rec;
      rec.id = batches[i][k].id;
      rec.pair_label = parsed.labels[k];
      rec.annotator = tag;
      rec.prompt = results[i].prompt.system + "\n" + results[i].prompt.user;
      rec.response = results[i].body;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<AnnotationRecord> annotate_llm_search(
    const std::vector<SearchCandidates>& items, SearchTemplate tmpl,
    const LlmConfig& config, ChatTransport* transport) {
  LlmClient client(config, transport);

  struct ItemResult {
    Prompt prompt;
    std::string body;
  };
  std::vector<ItemResult> results(items.size());

  run_bounded(items.size(), static_cast<size_t>(config.max_inflight),
              [&](size_t i) {
    std::vector<PromptLabel> labels;
    labels.reserve(items[i].filtered.size());
    for (const auto& l : items[i].filtered) {
      labels.push_back({l.text, l.score});
    }
    Prompt prompt = build_search_prompt(items[i].query_text, labels, tmpl);
    std::string body;
    try {
      body = client.complete_raw(prompt);
    } catch (const std::exception& e) {
      throw AnnotationFailedError(
          "query " + items[i].query_id + ": " + e.what(),
          {items[i].query_id});
    }
    results[i] = {std::move(prompt), std::move(body)};
  });

  std::vector<AnnotationRecord> records;
  records.reserve(items.size());
  std::string tag = "llm(" + config.model + ")";
  for (size_t i = 0; i < items.size(); ++i) {
    std::string content;
    try {
      content = extract_message_content(results[i].body);
    } catch (const std::exception& e) {
      throw AnnotationFailedError(
          "query " + items[i].query_id + ": " + e.what(),
          {items[i].query_id});
    }
    SearchParse parsed =
        parse_search_response(content, items[i].filtered.size());
    AnnotationRecord rec;
    rec.id = items[i].query_id;
    rec.annotator = tag;
    // the prompt lists labels by descending score; map the chosen rank back
    std::vector<size_t> rank_to_item(items[i].filtered.size());
    {
      std::vector<size_t> order(items[i].filtered.size());
      for (size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return items[i].filtered[a].score > items[i].filtered[b].score;
      });
      rank_to_item = order;
    }
    for (size_t k = 0; k < items[i].filtered.size(); ++k) {
      rec.search_assignment[items[i].filtered[k].id] = 0;
    }
    if (parsed.chosen) {
      rec.search_assignment[items[i].filtered[rank_to_item[*parsed.chosen]].id] = 1;
    }
    rec.prompt = results[i].prompt.system + "\n" + results[i].prompt.user;
    rec.response = results[i].body;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace eagle
