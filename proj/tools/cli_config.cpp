#include "cli_config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "dpgtr/error.hpp"

namespace dpgtr::cli {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& known) {
  if (!obj.is_object()) throw ConfigError(fmt::format("'{}' must be a JSON object", where));
  for (const auto& [key, _] : obj.items()) {
    if (!known.contains(key)) throw ConfigError(fmt::format("unknown key '{}.{}'", where, key));
  }
}

template <typename T>
T get(const json& obj, const std::string& where, const std::string& key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("bad value for '{}.{}': {}", where, key, e.what()));
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const std::string& key, T& out) {
  if (obj.contains(key)) out = get<T>(obj, where, key);
}

PipelineConfig parse_pipeline(const json& j, std::string& scorer) {
  static const std::set<std::string> known = {
      "m", "k", "temperature", "schedule", "release_method", "epsilon2", "topk_strategy",
      "clip", "mode", "seed", "max_tokens", "paraphrase_template", "model",
      "stage3_temperature", "max_regenerations", "fallback_to_exemplar", "parallelism", "scorer"};
  reject_unknown(j, "pipeline", known);
  PipelineConfig c;
  read(j, "pipeline", "m", c.m);
  read(j, "pipeline", "k", c.k);
  read(j, "pipeline", "temperature", c.temperature);
  if (j.contains("schedule")) {
    c.schedule = RewriteSchedule::parse_sweep(get<std::string>(j, "pipeline", "schedule"));
  }
  if (j.contains("release_method")) {
    auto m = get<std::string>(j, "pipeline", "release_method");
    if (m == "ndp") c.release_method = ReleaseMethod::NDP;
    else if (m == "dp") c.release_method = ReleaseMethod::DP;
    else throw ConfigError(fmt::format("release_method must be ndp or dp, got '{}'", m));
  }
  if (j.contains("epsilon2")) c.epsilon2 = get<double>(j, "pipeline", "epsilon2");
  if (j.contains("topk_strategy")) {
    auto s = get<std::string>(j, "pipeline", "topk_strategy");
    if (s == "peel") c.topk_strategy = TopKStrategy::peel;
    else if (s == "joint") c.topk_strategy = TopKStrategy::joint;
    else throw ConfigError(fmt::format("topk_strategy must be peel or joint, got '{}'", s));
  }
  if (j.contains("clip")) {
    const json& clip = j.at("clip");
    reject_unknown(clip, "pipeline.clip", {"b_min", "b_max", "width"});
    try {
      if (clip.contains("width")) {
        if (clip.contains("b_min") || clip.contains("b_max")) {
          throw ConfigError("pipeline.clip takes either width or b_min/b_max");
        }
        c.bounds = ClipBounds::with_width(get<double>(clip, "pipeline.clip", "width"));
      } else {
        c.bounds = ClipBounds(get<double>(clip, "pipeline.clip", "b_min"),
                              get<double>(clip, "pipeline.clip", "b_max"));
      }
    } catch (const DomainError& e) {
      throw ConfigError(fmt::format("pipeline.clip: {}", e.what()));
    }
  }
  if (j.contains("mode")) {
    auto m = get<std::string>(j, "pipeline", "mode");
    if (m == "blackbox") c.mode = RewriteMode::blackbox;
    else if (m == "whitebox") c.mode = RewriteMode::whitebox;
    else throw ConfigError(fmt::format("mode must be blackbox or whitebox, got '{}'", m));
  }
  read(j, "pipeline", "seed", c.seed);
  read(j, "pipeline", "max_tokens", c.max_tokens);
  read(j, "pipeline", "paraphrase_template", c.paraphrase_template);
  read(j, "pipeline", "model", c.model);
  read(j, "pipeline", "stage3_temperature", c.stage3_temperature);
  read(j, "pipeline", "max_regenerations", c.max_regenerations);
  read(j, "pipeline", "fallback_to_exemplar", c.fallback_to_exemplar);
  read(j, "pipeline", "parallelism", c.parallelism);
  read(j, "pipeline", "scorer", scorer);
  if (scorer != "unigram" && scorer != "logprob") {
    throw ConfigError(fmt::format("scorer must be unigram or logprob, got '{}'", scorer));
  }
  if (c.paraphrase_template.find("{prompt}") == std::string::npos) {
    throw ConfigError("paraphrase_template must contain {prompt}");
  }
  return c;
}

ClientConfig parse_client(const json& j) {
  reject_unknown(j, "client", {"provider", "base_url", "model", "timeout_s", "max_inflight",
                               "api_key_env", "follow_avoid_list"});
  ClientConfig c;
  read(j, "client", "provider", c.provider);
  read(j, "client", "base_url", c.endpoint.base_url);
  read(j, "client", "model", c.endpoint.model);
  read(j, "client", "timeout_s", c.endpoint.timeout_s);
  read(j, "client", "max_inflight", c.endpoint.max_inflight);
  read(j, "client", "api_key_env", c.endpoint.api_key_env);
  read(j, "client", "follow_avoid_list", c.follow_avoid_list);
  if (c.provider != "mock" && c.provider != "http") {
    throw ConfigError(fmt::format("client.provider must be mock or http, got '{}'", c.provider));
  }
  if (c.provider == "http" && c.endpoint.base_url.empty()) {
    throw ConfigError("client.base_url is required for the http provider");
  }
  if (c.endpoint.max_inflight < 1) throw ConfigError("client.max_inflight must be >= 1");
  if (!(c.endpoint.timeout_s > 0.0)) throw ConfigError("client.timeout_s must be positive");
  return c;
}

EvaluationConfig parse_evaluation(const json& j) {
  reject_unknown(j, "evaluation", {"methods", "temperatures", "repeats", "seed", "parallelism",
                                   "sample_n", "sample_seed", "answer_model"});
  EvaluationConfig c;
  read(j, "evaluation", "methods", c.methods);
  read(j, "evaluation", "temperatures", c.temperatures);
  read(j, "evaluation", "repeats", c.repeats);
  read(j, "evaluation", "seed", c.seed);
  read(j, "evaluation", "parallelism", c.parallelism);
  if (j.contains("sample_n")) c.sample_n = get<std::size_t>(j, "evaluation", "sample_n");
  read(j, "evaluation", "sample_seed", c.sample_seed);
  read(j, "evaluation", "answer_model", c.answer_model);
  if (c.repeats < 1) throw ConfigError("evaluation.repeats must be >= 1");
  return c;
}

}  // namespace

CliConfig parse_config(const json& doc) {
  reject_unknown(doc, "config", {"pipeline", "client", "evaluation"});
  CliConfig c;
  if (doc.contains("pipeline")) c.pipeline = parse_pipeline(doc.at("pipeline"), c.scorer);
  if (doc.contains("client")) c.client = parse_client(doc.at("client"));
  if (doc.contains("evaluation")) c.evaluation = parse_evaluation(doc.at("evaluation"));
  if (c.pipeline.model.empty()) c.pipeline.model = c.client.endpoint.model;
  if (c.evaluation.answer_model.empty()) c.evaluation.answer_model = c.pipeline.model;
  if (c.scorer == "logprob" && c.client.provider != "http") {
    throw ConfigError("the logprob scorer needs the http provider");
  }
  return c;
}

CliConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
  }
  return parse_config(doc);
}

ServiceBundle make_services(const CliConfig& config) {
  ServiceBundle b;
  if (config.client.provider == "http") {
    // Retries live in the HTTP client; the pipeline layer does not add more.
    auto http = std::make_unique<HttpChatClient>(config.client.endpoint);
    HttpChatClient* raw = http.get();
    if (config.scorer == "logprob") {
      b.services.scorer = [raw](const ParaphraseGroup&) -> std::unique_ptr<PerplexityScorer> {
        return std::make_unique<LogprobPerplexityScorer>(
            [raw](const std::string& text) { return raw->prompt_logprobs(text); });
      };
    }
    b.services.retry.max_attempts = 1;
    b.client = std::move(http);
  } else {
    b.client = std::make_unique<MockLlm>(MockOptions{config.client.follow_avoid_list});
  }
  b.services.client = b.client.get();
  b.services.clock = default_clock();
  b.services.sleep = real_sleeper();
  return b;
}

}  // namespace dpgtr::cli
