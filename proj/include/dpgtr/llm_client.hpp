#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/error.hpp"

namespace dpgtr {

enum class ChatRole { system, user };

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 256;
  std::optional<std::uint64_t> seed;

  // Throws DomainError unless there is a user message and temperature >= 0.
  void validate() const;
};

struct ChatResponse {
  std::string text;
  std::uint64_t tokens_generated = 0;
  // False when tokens_generated is a whitespace estimate.
  bool usage_reported = false;
  std::int64_t latency_ms = 0;
  int attempts = 1;
};

// Failure talking to a completion service.
class LlmError : public Error {
 public:
  LlmError(const std::string& what, int status, int attempts, bool retryable)
      : Error(what), status_(status), attempts_(attempts), retryable_(retryable) {}

  // HTTP status, or 0 for transport-level failures.
  int status() const { return status_; }
  int attempts() const { return attempts_; }
  bool retryable() const { return retryable_; }

 private:
  int status_;
  int attempts_;
  bool retryable_;
};

// Anything that answers chat-completion requests: remote endpoints, the
// deterministic mock, or test doubles. Implementations must be callable from
// several threads at once.
class LlmService {
 public:
  virtual ~LlmService() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  double jitter = 0.2;  // fraction of the delay added uniformly at random

  // Delay before retry number `retry` (1-based), excluding jitter.
  std::chrono::milliseconds backoff(int retry) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

Sleeper real_sleeper();

// Runs `call` until it succeeds, a non-retryable LlmError escapes, or
// max_attempts is reached. The returned response records the attempt count;
// a final failure is rethrown with it.
ChatResponse call_with_retries(const std::function<ChatResponse()>& call, const RetryPolicy& policy,
                               const Sleeper& sleep, std::uint64_t jitter_seed = 0);

struct EndpointConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  double timeout_s = 60.0;
  int max_inflight = 8;
  std::string api_key_env = "OPENAI_API_KEY";
};

// Builds the chat-completions request body.
nlohmann::json chat_request_body(const ChatRequest& req);

// Parses a chat-completions response body. Missing usage falls back to a
// whitespace token count of the returned text.
ChatResponse parse_chat_response(const std::string& body);

// OpenAI-compatible HTTP client.
class HttpChatClient : public LlmService {
 public:
  explicit HttpChatClient(EndpointConfig endpoint, RetryPolicy retry = {},
                          Sleeper sleep = real_sleeper());

  ChatResponse complete(const ChatRequest& req) override;

  // Per-token log-probabilities of `text` via the legacy completions endpoint
  // with echo enabled (vLLM, llama.cpp server and similar expose it).
  std::vector<double> prompt_logprobs(const std::string& text);

  const EndpointConfig& endpoint() const { return endpoint_; }

 private:
  struct Url {
    std::string scheme_host_port;
    std::string path_prefix;
  };

  ChatResponse post_once(const std::string& path, const std::string& body, int attempt,
                         std::string* raw_body);
  std::string post_with_retries(const std::string& path, const nlohmann::json& body,
                                ChatResponse* meta);

  EndpointConfig endpoint_;
  RetryPolicy retry_;
  Sleeper sleep_;
  Url url_;
  std::string api_key_;

  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;
  std::uint64_t calls_ = 0;
};

struct MockOptions {
  // Stage-3 requests: drop forbidden words from the exemplar before
  // perturbing. Off by default, i.e. the mock ignores the avoid list.
  bool follow_avoid_list = false;
};

// Deterministic stand-in for a chat model. The response is a pure function
// of the message contents, the temperature bucket and the seed. Paraphrase
// and generation frames get a seeded synonym substitution plus word-order
// shuffle whose intensity grows with temperature; question-answering frames
// get a lexical-overlap answer.
ChatResponse mock_complete(const ChatRequest& req, const MockOptions& options = {});

class MockLlm : public LlmService {
 public:
  explicit MockLlm(MockOptions options = {}) : options_(options) {}
  ChatResponse complete(const ChatRequest& req) override { return mock_complete(req, options_); }

 private:
  MockOptions options_;
};

// Synonym table backing the mock; exposed so fixtures can draw vocabulary
// the mock knows how to perturb.
const std::vector<std::pair<std::string, std::vector<std::string>>>& mock_synonym_table();

}  // namespace dpgtr
