#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dpgtr {

enum class Metric { rouge1, rougeL, bleu };

const char* to_string(Metric metric);

struct MetricScore {
  Metric metric = Metric::rouge1;
  double value = 0.0;  // F1 for ROUGE, BLEU-4 for BLEU
  double precision = 0.0;
  double recall = 0.0;
  std::vector<double> ngram_precisions;  // BLEU only, after smoothing
  double brevity_penalty = 1.0;          // BLEU only
};

// Case-folded, punctuation-stripped whitespace tokens; stop words kept.
std::vector<std::string> metric_tokens(const std::string& text);

MetricScore rouge1(const std::vector<std::string>& reference,
                   const std::vector<std::string>& hypothesis);
MetricScore rougeL(const std::vector<std::string>& reference,
                   const std::vector<std::string>& hypothesis);
// Sentence-level BLEU-4. A zero n-gram precision is replaced by
// 1 / (2 · number of hypothesis n-grams). Hypotheses shorter than four
// tokens use the orders they have, with renormalized weights.
MetricScore bleu(const std::vector<std::string>& reference,
                 const std::vector<std::string>& hypothesis);

MetricScore rouge1(const std::string& reference, const std::string& hypothesis);
MetricScore rougeL(const std::string& reference, const std::string& hypothesis);
MetricScore bleu(const std::string& reference, const std::string& hypothesis);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

nlohmann::json to_json(const MetricScore& score);

}  // namespace dpgtr
