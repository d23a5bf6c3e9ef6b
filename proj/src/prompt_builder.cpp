#include "dpgtr/prompt_builder.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "dpgtr/consensus_keywords.hpp"
#include "dpgtr/text.hpp"

namespace dpgtr {

FinalPromptRequest FinalPromptRequest::make(std::string exemplar,
                                            const std::vector<std::string>& keywords,
                                            double temperature) {
  FinalPromptRequest req;
  req.exemplar = std::move(exemplar);
  std::unordered_set<std::string> seen;
  for (const auto& k : keywords) {
    if (seen.insert(k).second) req.forbidden.push_back(k);
  }
  req.temperature = temperature;
  return req;
}

std::string render_template(const FinalPromptRequest& req) {
  if (req.exemplar.empty()) throw DomainError("final prompt needs a nonempty exemplar");
  if (req.template_id != kFinalPromptTemplateId) {
    throw DomainError(fmt::format("unknown final prompt template '{}'", req.template_id));
  }
  std::string out;
  out += kFinalPromptHeader;
  out += '\n';
  out += req.exemplar;
  out += '\n';
  out += kFinalPromptAvoidLine;
  out += '\n';
  out += join(req.forbidden, ", ");
  return out;
}

std::vector<std::string> find_leaked_words(const std::string& text,
                                           const std::vector<std::string>& forbidden) {
  auto tokens = tokenize_normalize(text);
  std::unordered_set<std::string> present(tokens.begin(), tokens.end());
  std::vector<std::string> leaked;
  for (const auto& w : forbidden) {
    if (present.contains(w)) leaked.push_back(w);
  }
  return leaked;
}

SanitizeOutcome generate_sanitized(const FinalPromptRequest& req, LlmService& client,
                                   PrivacyLedger& ledger, const GenerateOptions& options) {
  if (req.temperature < 0.0) throw DomainError("stage-3 temperature must be >= 0");
  if (options.max_regenerations < 0 || options.max_regenerations > 2) {
    throw DomainError("max_regenerations must be within [0, 2]");
  }
  SanitizeOutcome out;
  out.final_prompt = render_template(req);
  if (req.temperature > 0.01) {
    out.warnings.push_back(
        fmt::format("stage-3 temperature {} exceeds the 0.01 advisory ceiling", req.temperature));
  }

  ChatRequest chat;
  chat.model = options.model;
  if (!options.system_prompt.empty()) chat.messages.push_back({ChatRole::system, options.system_prompt});
  chat.messages.push_back({ChatRole::user, out.final_prompt});
  chat.temperature = req.temperature;
  chat.max_tokens = options.max_tokens;

  for (int round = 0;; ++round) {
    chat.seed = options.seed + static_cast<std::uint64_t>(round);
    try {
      ChatResponse resp = call_with_retries([&] { return client.complete(chat); }, options.retry,
                                            options.sleep, options.seed);
      out.sanitized = resp.text;
      out.used_fallback = false;
    } catch (const LlmError& e) {
      if (!options.fallback_to_exemplar) {
        throw SanitizationError(fmt::format("stage-3 generation failed: {}", e.what()));
      }
      out.sanitized = req.exemplar;
      out.used_fallback = true;
      out.warnings.push_back(fmt::format("stage-3 generation failed, emitted exemplar: {}", e.what()));
    }
    out.leaked_words = find_leaked_words(out.sanitized, req.forbidden);
    out.leakage_flag = !out.leaked_words.empty();
    if (!out.leakage_flag || out.used_fallback || round >= options.max_regenerations) break;
    ++out.regenerations;
  }

  ledger.append({LedgerStage::post_process, "stage3_generation", kInfiniteEpsilon, 1,
                 fmt::format("T={}, regenerations={}", req.temperature, out.regenerations),
                 false, std::nullopt});
  return out;
}

}  // namespace dpgtr
