#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "dpgtr/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "dpgtr/random.hpp"
#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

bool is_retryable_status(int status) { return status == 429 || status >= 500; }

std::string excerpt(const std::string& body, std::size_t limit = 200) {
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

const char* role_name(ChatRole role) { return role == ChatRole::system ? "system" : "user"; }

}  // namespace

void ChatRequest::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw DomainError(fmt::format("chat temperature must be >= 0, got {}", temperature));
  }
  if (max_tokens <= 0) throw DomainError("max_tokens must be positive");
  bool has_user = std::any_of(messages.begin(), messages.end(),
                              [](const ChatMessage& m) { return m.role == ChatRole::user; });
  if (!has_user) throw DomainError("chat request needs at least one user message");
}

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
  double ms = static_cast<double>(base_delay.count()) * std::pow(factor, retry - 1);
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ChatResponse call_with_retries(const std::function<ChatResponse()>& call, const RetryPolicy& policy,
                               const Sleeper& sleep, std::uint64_t jitter_seed) {
  Rng jitter(jitter_seed);
  const int max_attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      ChatResponse resp = call();
      resp.attempts = attempt;
      return resp;
    } catch (const LlmError& e) {
      if (!e.retryable()) {
        throw LlmError(e.what(), e.status(), attempt, false);
      }
      if (attempt >= max_attempts) {
        throw LlmError(fmt::format("giving up after {} attempts: {}", attempt, e.what()),
                       e.status(), attempt, true);
      }
    }
    auto delay = policy.backoff(attempt);
    auto extra = static_cast<std::int64_t>(static_cast<double>(delay.count()) * policy.jitter *
                                           jitter.uniform());
    if (sleep) sleep(delay + std::chrono::milliseconds(extra));
  }
}

nlohmann::json chat_request_body(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  nlohmann::json body = {
      {"model", req.model},
      {"messages", std::move(messages)},
      {"temperature", req.temperature},
      {"max_tokens", req.max_tokens},
  };
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

ChatResponse parse_chat_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw LlmError(fmt::format("unparseable response body: {}", excerpt(body)), 200, 1, false);
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw LlmError(fmt::format("response has no choices: {}", excerpt(body)), 200, 1, false);
  }
  const auto& choice = j["choices"][0];
  ChatResponse resp;
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    resp.text = choice["message"]["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    resp.text = choice["text"].get<std::string>();
  } else {
    throw LlmError(fmt::format("first choice carries no text: {}", excerpt(body)), 200, 1, false);
  }
  if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("completion_tokens") &&
      j["usage"]["completion_tokens"].is_number_integer()) {
    resp.tokens_generated = j["usage"]["completion_tokens"].get<std::uint64_t>();
    resp.usage_reported = true;
  } else {
    resp.tokens_generated = split_whitespace(resp.text).size();
    resp.usage_reported = false;
  }
  return resp;
}

HttpChatClient::HttpChatClient(EndpointConfig endpoint, RetryPolicy retry, Sleeper sleep)
    : endpoint_(std::move(endpoint)), retry_(retry), sleep_(std::move(sleep)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, kUrl)) {
    throw ConfigError(fmt::format("invalid base_url '{}'", endpoint_.base_url));
  }
  url_.scheme_host_port = m[1].str();
  url_.path_prefix = m[2].matched ? m[2].str() : "";
  while (!url_.path_prefix.empty() && url_.path_prefix.back() == '/') url_.path_prefix.pop_back();
  if (endpoint_.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
  if (!(endpoint_.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
  if (!endpoint_.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str())) api_key_ = key;
  }
}

ChatResponse HttpChatClient::post_once(const std::string& path, const std::string& body,
                                       int attempt, std::string* raw_body) {
  httplib::Client cli(url_.scheme_host_port);
  auto secs = static_cast<time_t>(endpoint_.timeout_s);
  auto usecs = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto started = std::chrono::steady_clock::now();
  auto res = cli.Post(url_.path_prefix + path, headers, body, "application/json");
  auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  if (!res) {
    throw LlmError(fmt::format("transport error: {}", httplib::to_string(res.error())), 0, attempt,
                   true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw LlmError(fmt::format("HTTP {}: {}", res->status, excerpt(res->body)), res->status,
                   attempt, is_retryable_status(res->status));
  }
  *raw_body = res->body;
  ChatResponse meta;
  meta.latency_ms = latency.count();
  return meta;
}

std::string HttpChatClient::post_with_retries(const std::string& path, const nlohmann::json& body,
                                              ChatResponse* meta) {
  const std::string payload = body.dump();
  std::uint64_t call_id;
  {
    std::unique_lock lock(inflight_mu_);
    inflight_cv_.wait(lock, [&] { return inflight_ < endpoint_.max_inflight; });
    ++inflight_;
    call_id = calls_++;
  }
  struct Release {
    HttpChatClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->inflight_mu_);
        --self->inflight_;
      }
      self->inflight_cv_.notify_one();
    }
  } release{this};

  std::string raw;
  int attempt = 0;
  *meta = call_with_retries(
      [&] {
        ++attempt;
        return post_once(path, payload, attempt, &raw);
      },
      retry_, sleep_, call_id);
  return raw;
}

ChatResponse HttpChatClient::complete(const ChatRequest& req) {
  req.validate();
  ChatRequest sent = req;
  if (sent.model.empty()) sent.model = endpoint_.model;
  ChatResponse meta;
  std::string raw = post_with_retries("/chat/completions", chat_request_body(sent), &meta);
  ChatResponse resp = parse_chat_response(raw);
  resp.latency_ms = meta.latency_ms;
  resp.attempts = meta.attempts;
  return resp;
}

std::vector<double> HttpChatClient::prompt_logprobs(const std::string& text) {
  nlohmann::json body = {
      {"model", endpoint_.model}, {"prompt", text}, {"max_tokens", 0},
      {"echo", true},             {"logprobs", 0},  {"temperature", 0.0},
  };
  ChatResponse meta;
  std::string raw = post_with_retries("/completions", body, &meta);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    throw LlmError(fmt::format("unparseable logprob body: {}", excerpt(raw)), 200, meta.attempts,
                   false);
  }
  std::vector<double> out;
  try {
    for (const auto& lp : j.at("choices").at(0).at("logprobs").at("token_logprobs")) {
      // The first prompt token has no conditional probability.
      if (lp.is_number()) out.push_back(lp.get<double>());
    }
  } catch (const nlohmann::json::exception&) {
    throw LlmError(fmt::format("response carries no token_logprobs: {}", excerpt(raw)), 200,
                   meta.attempts, false);
  }
  return out;
}

}  // namespace dpgtr
