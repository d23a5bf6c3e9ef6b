#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/random.hpp"
#include "dpgtr/rewriting.hpp"

namespace dpgtr {

struct NormalizationRecord {
  bool case_folded = true;
  bool punctuation_stripped = true;
  std::string stop_word_list;
};

// Word occurrence counts accumulated over every rewrite of a group.
struct KeywordHistogram {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total_words = 0;
  NormalizationRecord normalization;

  void add(const std::string& word, std::uint64_t n = 1);
};

enum class ReleaseMethod { NDP, DP };

const char* to_string(ReleaseMethod method);

struct ReleasedKeywords {
  std::vector<std::string> words;
  ReleaseMethod method = ReleaseMethod::NDP;
  double epsilon = kInfiniteEpsilon;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> warnings;
};

enum class TopKStrategy { peel, joint };

// Whitespace split, punctuation strip, case fold, stop-word removal.
std::vector<std::string> tokenize_normalize(const std::string& text);

// Counts every occurrence across all rewrites; the source prompt is not
// counted.
KeywordHistogram build_histogram(const ParaphraseGroup& group);
KeywordHistogram build_histogram(const std::vector<std::string>& texts);

// Top-K by count, ties by ascending word. Post-processing: records a
// zero-cost entry.
ReleasedKeywords topk_ndp(const KeywordHistogram& hist, std::size_t k, PrivacyLedger& ledger);

// ε-DP release of K distinct words with count utility (sensitivity 1).
// `peel` makes K exponential-mechanism draws without replacement at ε/K
// each. `joint` is reserved and throws NotAvailableError.
ReleasedKeywords topk_dp(const KeywordHistogram& hist, std::size_t k, double epsilon,
                         TopKStrategy strategy, Rng& rng, PrivacyLedger& ledger);

// Exact probability that the peel release outputs `sequence` (ordered, K =
// sequence.size()). Zero for sequences with repeated or unknown words.
double topk_peel_probability(const KeywordHistogram& hist, const std::vector<std::string>& sequence,
                             double epsilon);

nlohmann::json to_json(const KeywordHistogram& hist);
nlohmann::json to_json(const ReleasedKeywords& released);

}  // namespace dpgtr
