#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dpgtr/consensus_keywords.hpp"
#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/exemplar_selection.hpp"
#include "dpgtr/llm_client.hpp"
#include "dpgtr/prompt_builder.hpp"
#include "dpgtr/rewriting.hpp"

namespace dpgtr {

struct PipelineConfig {
  std::size_t m = 10;
  std::size_t k = 10;
  double temperature = 1.0;                 // uniform schedule when `schedule` is unset
  std::optional<RewriteSchedule> schedule;  // must total m
  ReleaseMethod release_method = ReleaseMethod::NDP;
  std::optional<double> epsilon2;
  TopKStrategy topk_strategy = TopKStrategy::peel;
  ClipBounds bounds = ClipBounds::with_width(9.7);
  RewriteMode mode = RewriteMode::blackbox;
  std::uint64_t seed = 0;
  int max_tokens = 64;
  std::string paraphrase_template = std::string(kDefaultParaphraseTemplate);
  std::string model;
  double stage3_temperature = 0.0;
  int max_regenerations = 0;
  bool fallback_to_exemplar = false;
  std::size_t parallelism = 1;

  void validate() const;
  RewriteSchedule effective_schedule() const;
};

struct SanitizedResult {
  std::string original;
  ParaphraseGroup group;
  KeywordHistogram histogram;
  ReleasedKeywords released;
  ScoredParaphrase exemplar;
  std::string final_prompt;
  std::string sanitized;
  PrivacyLedger ledger;
  bool leakage_flag = false;
  std::vector<std::string> leaked_words;
  bool uniform_schedule = true;
};

// Stage failure with the audit trail of everything completed before it.
class PipelineError : public Error {
 public:
  PipelineError(const std::string& what, std::string stage, nlohmann::json partial)
      : Error(what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const { return stage_; }
  const nlohmann::json& partial() const { return partial_; }

 private:
  std::string stage_;
  nlohmann::json partial_;
};

// Stage-1 plug-in seam: anything that turns a prompt into a paraphrase group
// and charges its own privacy cost.
using GroupRewriter =
    std::function<ParaphraseGroup(const std::string& prompt, const PipelineConfig& config,
                                  PrivacyLedger& ledger)>;

using ScorerFactory =
    std::function<std::unique_ptr<PerplexityScorer>(const ParaphraseGroup& group)>;

// Returns an ISO-8601 UTC timestamp.
using Clock = std::function<std::string()>;

// System clock, or SOURCE_DATE_EPOCH when that variable is set.
Clock default_clock();

struct PipelineServices {
  LlmService* client = nullptr;  // black-box rewriting and stage 3
  // White-box logit oracle per prompt; defaults to the toy oracle.
  std::function<WhiteboxEngine(const std::string& prompt)> whitebox;
  ScorerFactory scorer;  // defaults to the group-fit unigram scorer
  Clock clock;
  RetryPolicy retry{3, std::chrono::milliseconds(0), 2.0, 0.0};
  Sleeper sleep;
};

// Group rewriting through the built-in white-box or black-box engine.
GroupRewriter default_rewriter(const PipelineServices& services);

// Returns the prompt m times unchanged and charges nothing. Exercises the
// plug-in seam; offers no privacy.
GroupRewriter identity_rewriter();

SanitizedResult run_dp_gtr(const std::string& prompt, const PipelineConfig& config,
                           const GroupRewriter& rewriter, const PipelineServices& services);

SanitizedResult run_dp_gtr(const std::string& prompt, const PipelineConfig& config,
                           const PipelineServices& services);

nlohmann::json to_json(const PrivacyLedger& ledger);
nlohmann::json to_json(const SanitizedResult& result);

std::string budget_report(const PrivacyLedger& ledger, bool uniform_schedule);
std::string budget_report(const SanitizedResult& result);

// Appends one JSON line.
void append_audit_record(const std::string& path, const nlohmann::json& record);

}  // namespace dpgtr
