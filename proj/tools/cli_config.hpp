#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/eval_harness.hpp"
#include "dpgtr/llm_client.hpp"
#include "dpgtr/pipeline.hpp"

namespace dpgtr::cli {

struct ClientConfig {
  std::string provider = "mock";  // mock | http
  EndpointConfig endpoint;
  bool follow_avoid_list = false;  // mock only
};

struct EvaluationConfig {
  std::vector<std::string> methods{kMethodDpGtrNdp, kMethodDpPrompt};
  std::vector<double> temperatures{0.1, 0.15, 0.2, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  int repeats = 5;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  std::optional<std::size_t> sample_n;
  std::uint64_t sample_seed = 0;
  std::string answer_model;
};

struct CliConfig {
  PipelineConfig pipeline;
  std::string scorer = "unigram";  // unigram | logprob
  ClientConfig client;
  EvaluationConfig evaluation;
};

// Unknown keys and ill-typed values raise ConfigError.
CliConfig parse_config(const nlohmann::json& doc);
CliConfig load_config(const std::string& path);

// Live services built from a config. Owns the client.
struct ServiceBundle {
  std::unique_ptr<LlmService> client;
  PipelineServices services;
};

ServiceBundle make_services(const CliConfig& config);

}  // namespace dpgtr::cli
