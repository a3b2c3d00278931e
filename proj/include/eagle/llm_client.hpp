// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "eagle/annotate.hpp"
#include "eagle/errors.hpp"

namespace eagle {

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_inflight = 4;
  int max_attempts = 3;
  int backoff_base_ms = 250;
  std::filesystem::path cache_dir;  // empty disables the cache
  const char* api_key_env = "EAGLE_LLM_API_KEY";
};

/// Retryable transport failure (connection refused, 5xx, timeout).
class TransportError : public Error {
 public:
  using Error::Error;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;

  /// Returns the raw chat-completion response body.
  virtual std::string complete(const LlmConfig& config, const Prompt& prompt) = 0;
};

/// POSTs {model, temperature, messages:[system, user]} as JSON. Bearer
/// token read from the configured environment variable when present.
class HttpChatTransport final : public ChatTransport {
 public:
  std::string complete(const LlmConfig& config, const Prompt& prompt) override;
};

/// First choice's message content, or throws on a malformed body.
std::string extract_message_content(const std::string& body);

/// Retry with exponential backoff around a transport, fronted by a
/// file-per-request response cache keyed by hash(model || prompt). Warm
/// cache entries never touch the transport. Thread-safe.
class LlmClient {
 public:
  LlmClient(LlmConfig config, ChatTransport* transport);

  /// Raw response body (possibly from cache).
  std::string complete_raw(const Prompt& prompt);

  const LlmConfig& config() const { return config_; }

  static std::string cache_key(const std::string& model, const Prompt& prompt);

 private:
  LlmConfig config_;
  ChatTransport* transport_;
};

/// Batches pairs in groups of 10 (short final group), issues bounded
/// concurrent requests, parses responses, and returns records in input
/// order. A batch whose request ultimately fails raises
/// AnnotationFailedError carrying that batch's ids.
std::vector<AnnotationRecord> annotate_llm_pairs(
    const std::vector<PairExample>& examples, const LlmConfig& config,
    ChatTransport* transport);

/// One request per query over its filtered labels Y'.
std::vector<AnnotationRecord> annotate_llm_search(
    const std::vector<SearchCandidates>& items, SearchTemplate tmpl,
    const LlmConfig& config, ChatTransport* transport);

}  // namespace eagle
