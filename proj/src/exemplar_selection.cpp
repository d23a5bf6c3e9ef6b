#include "dpgtr/exemplar_selection.hpp"

#include <cmath>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

std::vector<std::string> scoring_tokens(const std::string& text) {
  return normalize_tokens(text, /*remove_stop_words=*/false);
}

}  // namespace

UnigramPerplexityScorer::UnigramPerplexityScorer(const std::vector<std::string>& corpus) {
  for (const auto& text : corpus) {
    for (auto& w : scoring_tokens(text)) {
      ++counts_[w];
      ++total_;
    }
  }
}

UnigramPerplexityScorer UnigramPerplexityScorer::fit(const ParaphraseGroup& group) {
  std::vector<std::string> corpus;
  for (const auto& r : group.rewrites) corpus.push_back(r.text);
  return UnigramPerplexityScorer(corpus);
}

double UnigramPerplexityScorer::score(const std::string& text) const {
  auto tokens = scoring_tokens(text);
  if (tokens.empty()) throw ScoringError("cannot score an empty token stream");
  std::set<std::string> unseen;
  for (const auto& t : tokens) {
    if (!counts_.contains(t)) unseen.insert(t);
  }
  const double vocab = static_cast<double>(counts_.size() + unseen.size());
  const double denom = static_cast<double>(total_) + vocab;
  double log_sum = 0.0;
  for (const auto& t : tokens) {
    auto it = counts_.find(t);
    double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
    log_sum += std::log((c + 1.0) / denom);
  }
  return std::exp(-log_sum / static_cast<double>(tokens.size()));
}

double LogprobPerplexityScorer::score(const std::string& text) const {
  if (scoring_tokens(text).empty()) throw ScoringError("cannot score an empty token stream");
  std::vector<double> logprobs;
  try {
    logprobs = fn_(text);
  } catch (const std::exception& e) {
    throw ScoringError(fmt::format("log-probability oracle failed: {}", e.what()));
  }
  if (logprobs.empty()) throw ScoringError("log-probability oracle returned no tokens");
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

double score_perplexity(const std::string& text, const PerplexityScorer& scorer) {
  double p = scorer.score(text);
  if (!(p > 0.0) || std::isnan(p)) {
    throw ScoringError(fmt::format("scorer returned non-positive perplexity {}", p));
  }
  return p;
}

ScoredParaphrase select_exemplar(const ParaphraseGroup& group, const PerplexityScorer& scorer,
                                 PrivacyLedger& ledger) {
  std::optional<ScoredParaphrase> best;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < group.rewrites.size(); ++i) {
    double p;
    try {
      p = score_perplexity(group.rewrites[i].text, scorer);
    } catch (const ScoringError&) {
      ++skipped;
      continue;
    }
    if (!best || p < best->perplexity) best = ScoredParaphrase{i, group.rewrites[i].text, p};
  }
  if (!best) throw ScoringError("no rewrite in the group could be scored");
  ledger.append({LedgerStage::post_process, "exemplar_selection", kInfiniteEpsilon, 1,
                 fmt::format("argmin perplexity over {} rewrites ({} unscorable)",
                             group.rewrites.size(), skipped),
                 false, std::nullopt});
  return *best;
}

}  // namespace dpgtr
