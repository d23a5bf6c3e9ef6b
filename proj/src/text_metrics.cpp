#include "dpgtr/text_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

double f1(double p, double r) { return (p > 0.0 && r > 0.0) ? 2.0 * p * r / (p + r) : 0.0; }

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::size_t clipped_overlap(const NgramCounts& ref, const NgramCounts& hyp) {
  std::size_t overlap = 0;
  for (const auto& [gram, c] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

}  // namespace

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::rouge1:
      return "rouge1";
    case Metric::rougeL:
      return "rougeL";
    case Metric::bleu:
      return "bleu";
  }
  return "unknown";
}

std::vector<std::string> metric_tokens(const std::string& text) {
  return normalize_tokens(text, /*remove_stop_words=*/false);
}

MetricScore rouge1(const std::vector<std::string>& reference,
                   const std::vector<std::string>& hypothesis) {
  MetricScore s;
  s.metric = Metric::rouge1;
  if (reference.empty() || hypothesis.empty()) return s;
  const auto overlap = static_cast<double>(clipped_overlap(ngrams(reference, 1), ngrams(hypothesis, 1)));
  s.precision = overlap / static_cast<double>(hypothesis.size());
  s.recall = overlap / static_cast<double>(reference.size());
  s.value = f1(s.precision, s.recall);
  return s;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

MetricScore rougeL(const std::vector<std::string>& reference,
                   const std::vector<std::string>& hypothesis) {
  MetricScore s;
  s.metric = Metric::rougeL;
  if (reference.empty() || hypothesis.empty()) return s;
  const auto l = static_cast<double>(lcs_length(reference, hypothesis));
  s.precision = l / static_cast<double>(hypothesis.size());
  s.recall = l / static_cast<double>(reference.size());
  s.value = f1(s.precision, s.recall);
  return s;
}

MetricScore bleu(const std::vector<std::string>& reference,
                 const std::vector<std::string>& hypothesis) {
  MetricScore s;
  s.metric = Metric::bleu;
  if (hypothesis.empty() || reference.empty()) {
    s.brevity_penalty = hypothesis.empty() ? 0.0 : 1.0;
    return s;
  }
  const std::size_t max_order = std::min<std::size_t>(4, hypothesis.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const auto hyp_grams = ngrams(hypothesis, n);
    const std::size_t hyp_total = hypothesis.size() - n + 1;
    std::size_t matched = clipped_overlap(ngrams(reference, n), hyp_grams);
    double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(hyp_total)
                           : 1.0 / (2.0 * static_cast<double>(hyp_total));
    s.ngram_precisions.push_back(p);
    log_sum += std::log(p);
  }
  const auto hyp_len = static_cast<double>(hypothesis.size());
  const auto ref_len = static_cast<double>(reference.size());
  s.brevity_penalty = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  s.value = s.brevity_penalty * std::exp(log_sum / static_cast<double>(max_order));
  s.precision = s.ngram_precisions.front();
  return s;
}

MetricScore rouge1(const std::string& reference, const std::string& hypothesis) {
  return rouge1(metric_tokens(reference), metric_tokens(hypothesis));
}

MetricScore rougeL(const std::string& reference, const std::string& hypothesis) {
  return rougeL(metric_tokens(reference), metric_tokens(hypothesis));
}

MetricScore bleu(const std::string& reference, const std::string& hypothesis) {
  return bleu(metric_tokens(reference), metric_tokens(hypothesis));
}

nlohmann::json to_json(const MetricScore& score) {
  nlohmann::json j = {{"metric", to_string(score.metric)}, {"value", score.value}};
  if (score.metric == Metric::bleu) {
    j["ngram_precisions"] = score.ngram_precisions;
    j["brevity_penalty"] = score.brevity_penalty;
  } else {
    j["precision"] = score.precision;
    j["recall"] = score.recall;
    j["f1"] = score.value;
  }
  return j;
}

}  // namespace dpgtr
