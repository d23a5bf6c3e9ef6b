#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/error.hpp"
#include "dpgtr/rewriting.hpp"

namespace dpgtr {

class ScoringError : public Error {
 public:
  using Error::Error;
};

// Perplexity oracle. Lower is more fluent; scores must be totally ordered.
class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  virtual double score(const std::string& text) const = 0;
};

// Add-one smoothed unigram model fit on a set of texts (normally the
// paraphrase group). Tokens of a scored text that the fit never saw extend
// the vocabulary for that call.
class UnigramPerplexityScorer : public PerplexityScorer {
 public:
  explicit UnigramPerplexityScorer(const std::vector<std::string>& corpus);
  static UnigramPerplexityScorer fit(const ParaphraseGroup& group);

  double score(const std::string& text) const override;

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Perplexity from per-token log-probabilities supplied by a language model,
// e.g. HttpChatClient::prompt_logprobs.
class LogprobPerplexityScorer : public PerplexityScorer {
 public:
  using LogprobFn = std::function<std::vector<double>(const std::string&)>;
  explicit LogprobPerplexityScorer(LogprobFn fn) : fn_(std::move(fn)) {}

  double score(const std::string& text) const override;

 private:
  LogprobFn fn_;
};

struct ScoredParaphrase {
  std::size_t index = 0;
  std::string text;
  double perplexity = 0.0;
};

double score_perplexity(const std::string& text, const PerplexityScorer& scorer);

// Lowest-perplexity rewrite; ties go to the lower index. Rewrites whose
// scoring throws ScoringError are skipped. Appends a zero-cost entry.
ScoredParaphrase select_exemplar(const ParaphraseGroup& group, const PerplexityScorer& scorer,
                                 PrivacyLedger& ledger);

}  // namespace dpgtr
