#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/error.hpp"
#include "dpgtr/llm_client.hpp"

namespace dpgtr {

inline constexpr std::string_view kFinalPromptTemplateId = "privacy-preserving-v1";
inline constexpr std::string_view kFinalPromptHeader =
    "Refer to the following question to generate a new question:";
inline constexpr std::string_view kFinalPromptAvoidLine = "Avoid using the following tokens:";

struct FinalPromptRequest {
  std::string exemplar;
  std::vector<std::string> forbidden;  // deduplicated, release order
  std::string template_id = std::string(kFinalPromptTemplateId);
  double temperature = 0.0;

  static FinalPromptRequest make(std::string exemplar, const std::vector<std::string>& keywords,
                                 double temperature = 0.0);
};

// Four lines joined by '\n': header, exemplar, avoid line, keywords joined by
// ", ". No trailing newline.
std::string render_template(const FinalPromptRequest& req);

class SanitizationError : public Error {
 public:
  using Error::Error;
};

struct GenerateOptions {
  std::string model;
  std::string system_prompt;  // empty: no system message
  int max_tokens = 128;
  int max_regenerations = 0;  // re-ask on leakage, at most 2
  bool fallback_to_exemplar = false;
  RetryPolicy retry{3, std::chrono::milliseconds(0), 2.0, 0.0};
  Sleeper sleep;
  std::uint64_t seed = 0;
};

struct SanitizeOutcome {
  std::string final_prompt;
  std::string sanitized;
  bool leakage_flag = false;
  std::vector<std::string> leaked_words;
  int regenerations = 0;
  bool used_fallback = false;
  std::vector<std::string> warnings;
};

// Forbidden words present in tokenize_normalize(text), in forbidden order.
std::vector<std::string> find_leaked_words(const std::string& text,
                                           const std::vector<std::string>& forbidden);

// Stage-3 generation. Appends a zero-cost post-processing entry.
SanitizeOutcome generate_sanitized(const FinalPromptRequest& req, LlmService& client,
                                   PrivacyLedger& ledger, const GenerateOptions& options = {});

}  // namespace dpgtr
