#include "dpgtr/consensus_keywords.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dpgtr/error.hpp"
#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

// Each of the K draws weighs a word by exp((ε/K)·c/2), i.e. softmax at T = 2K/ε.
double peel_temperature(std::size_t k, double epsilon) {
  return 2.0 * static_cast<double>(k) / epsilon;
}

}  // namespace

void KeywordHistogram::add(const std::string& word, std::uint64_t n) {
  counts[word] += n;
  total_words += n;
}

const char* to_string(ReleaseMethod method) { return method == ReleaseMethod::NDP ? "NDP" : "DP"; }

std::vector<std::string> tokenize_normalize(const std::string& text) {
  return normalize_tokens(text, /*remove_stop_words=*/true);
}

KeywordHistogram build_histogram(const std::vector<std::string>& texts) {
  KeywordHistogram hist;
  hist.normalization.stop_word_list = std::string(kStopWordListId);
  for (const auto& text : texts) {
    for (const auto& w : tokenize_normalize(text)) hist.add(w);
  }
  return hist;
}

KeywordHistogram build_histogram(const ParaphraseGroup& group) {
  std::vector<std::string> texts;
  texts.reserve(group.rewrites.size());
  for (const auto& r : group.rewrites) texts.push_back(r.text);
  return build_histogram(texts);
}

ReleasedKeywords topk_ndp(const KeywordHistogram& hist, std::size_t k, PrivacyLedger& ledger) {
  if (k == 0) throw DomainError("K must be at least 1");
  std::vector<std::pair<std::string, std::uint64_t>> ranked(hist.counts.begin(),
                                                            hist.counts.end());
  // std::map iteration is already ascending by word, so a stable sort by
  // count alone yields the lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  ReleasedKeywords out;
  out.method = ReleaseMethod::NDP;
  out.epsilon = kInfiniteEpsilon;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.words.push_back(ranked[i].first);
  if (ranked.empty()) out.warnings.push_back("empty histogram: no keywords released");
  else if (ranked.size() < k) {
    out.warnings.push_back(
        fmt::format("histogram has {} distinct words, fewer than K={}", ranked.size(), k));
  }
  ledger.append({LedgerStage::post_process, "topk_ndp", kInfiniteEpsilon, 1,
                 fmt::format("K={}", k), false, std::nullopt});
  return out;
}

double topk_peel_probability(const KeywordHistogram& hist, const std::vector<std::string>& sequence,
                             double epsilon) {
  if (sequence.empty()) throw DomainError("sequence must hold at least one word");
  if (!(epsilon > 0.0)) throw DomainError(fmt::format("epsilon must be positive, got {}", epsilon));
  std::vector<std::string> remaining;
  std::vector<double> scores;
  for (const auto& [w, c] : hist.counts) {
    remaining.push_back(w);
    scores.push_back(static_cast<double>(c));
  }
  const double temperature = peel_temperature(sequence.size(), epsilon);
  double prob = 1.0;
  for (const auto& word : sequence) {
    auto it = std::find(remaining.begin(), remaining.end(), word);
    if (it == remaining.end()) return 0.0;
    auto pos = it - remaining.begin();
    prob *= softmax(scores, temperature)[static_cast<std::size_t>(pos)];
    remaining.erase(it);
    scores.erase(scores.begin() + pos);
  }
  return prob;
}

ReleasedKeywords topk_dp(const KeywordHistogram& hist, std::size_t k, double epsilon,
                         TopKStrategy strategy, Rng& rng, PrivacyLedger& ledger) {
  if (k == 0) throw DomainError("K must be at least 1");
  if (!(epsilon > 0.0)) throw DomainError(fmt::format("epsilon must be positive, got {}", epsilon));
  if (k > hist.counts.size()) {
    throw DomainError(fmt::format("K={} exceeds the {} distinct words available", k,
                                  hist.counts.size()));
  }
  if (strategy == TopKStrategy::joint) {
    throw NotAvailableError("joint top-K mechanism is not available in this build; use peel");
  }

  std::vector<std::string> remaining;
  std::vector<double> scores;
  for (const auto& [w, c] : hist.counts) {
    remaining.push_back(w);
    scores.push_back(static_cast<double>(c));
  }
  const double temperature = peel_temperature(k, epsilon);

  ReleasedKeywords out;
  out.method = ReleaseMethod::DP;
  out.epsilon = epsilon;
  out.seed = rng.seed();
  for (std::size_t draw = 0; draw < k; ++draw) {
    std::size_t pick = sample_softmax(scores, temperature, rng);
    out.words.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    scores.erase(scores.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  ledger.append({LedgerStage::keyword_release, "topk_peel_em", epsilon, 1,
                 fmt::format("K={}, eps/K={} per draw", k, epsilon / static_cast<double>(k)),
                 false, std::nullopt});
  return out;
}

nlohmann::json to_json(const KeywordHistogram& hist) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [w, c] : hist.counts) counts[w] = c;
  return counts;
}

nlohmann::json to_json(const ReleasedKeywords& released) {
  nlohmann::json j = {{"words", released.words}, {"method", to_string(released.method)}};
  if (std::isinf(released.epsilon)) j["epsilon"] = "inf";
  else j["epsilon"] = released.epsilon;
  if (released.seed) j["seed"] = *released.seed;
  if (!released.warnings.empty()) j["warnings"] = released.warnings;
  return j;
}

}  // namespace dpgtr
