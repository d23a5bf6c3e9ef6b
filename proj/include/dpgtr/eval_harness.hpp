#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/error.hpp"
#include "dpgtr/llm_client.hpp"
#include "dpgtr/pipeline.hpp"

namespace dpgtr {

enum class DatasetKind { csqa, docvqa };
enum class DatasetFormat { csqa_jsonl, docvqa_json };

DatasetFormat parse_dataset_format(const std::string& name);

struct Choice {
  std::string label;
  std::string text;
};

struct QARecord {
  std::string id;
  std::string question;
  std::optional<std::vector<std::string>> context;  // OCR tokens (docvqa)
  std::optional<std::vector<Choice>> choices;       // five choices (csqa)
  std::string gold;
  DatasetKind dataset = DatasetKind::csqa;

  // Throws DomainError on a record that violates its dataset's shape.
  void validate() const;
};

struct RecordError {
  std::size_t position = 0;  // 1-based line (jsonl) or array index (json)
  std::string message;
};

struct LoadResult {
  std::vector<QARecord> records;
  std::vector<RecordError> errors;

  double malformed_fraction() const;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

struct SampleSpec {
  std::size_t n = 200;
  std::uint64_t seed = 0;
};

LoadResult load_dataset(const std::string& path, DatasetFormat format,
                        std::optional<SampleSpec> sample = std::nullopt);
LoadResult parse_dataset(std::istream& in, DatasetFormat format,
                         std::optional<SampleSpec> sample = std::nullopt);

// Throws DatasetError when more than `max_fraction` of records were malformed.
void require_healthy(const LoadResult& result, double max_fraction = 0.01);

// Seeded draw of n records without replacement (all records when n >= size).
std::vector<QARecord> sample_records(const std::vector<QARecord>& records, const SampleSpec& spec);

// Prompt frames sent to the answering model.
std::string csqa_answer_prompt(const std::string& question, const std::vector<Choice>& choices);
std::string docvqa_answer_prompt(const std::string& question, const std::vector<std::string>& ocr);

// Accepts "B", "b.", "(B)", "Answer: B". Returns the label or nullopt.
std::optional<std::string> parse_choice_label(const std::string& response,
                                              const std::vector<Choice>& choices);

struct SanitizerOutput {
  std::string text;
  double ledger_total = 0.0;
};

// Maps a question to its sanitized form. `seed` varies per item and repeat.
using Sanitizer = std::function<SanitizerOutput(const std::string& question, std::uint64_t seed)>;

struct EvalRow {
  std::string id;
  std::string method;
  double temperature = 0.0;
  int repeat_index = 0;
  double q_rouge1 = 0.0;
  double q_rougeL = 0.0;
  double q_bleu = 0.0;
  double utility = 0.0;
  double ledger_total = 0.0;
  bool failed = false;
  std::string error;
  std::string sanitized;
  std::string answer;
};

nlohmann::json to_json(const EvalRow& row);

struct EvalItemContext {
  std::string method;
  double temperature = 0.0;
  int repeat_index = 0;
  std::uint64_t seed = 0;
  std::string answer_model;
};

// One QA round: sanitize once, score privacy against the original question,
// answer the sanitized question, score utility.
EvalRow evaluate_item(const QARecord& record, const Sanitizer& sanitizer, LlmService& answerer,
                      const EvalItemContext& ctx);

struct FieldStats {
  double mean = 0.0;
  double std = 0.0;
};

struct AggregateRow {
  std::string method;
  double temperature = 0.0;
  std::size_t n = 0;
  std::size_t failed = 0;
  FieldStats q_rouge1;
  FieldStats q_rougeL;
  FieldStats q_bleu;
  FieldStats utility;
  FieldStats ledger_total;
};

// Groups by (method, temperature), sorted; failed rows are counted and
// excluded. Each field is averaged over items within a repeat, then the
// mean and population standard deviation are taken across repeats. Sums run
// over sorted values so row order never matters.
std::vector<AggregateRow> aggregate(const std::vector<EvalRow>& rows);

std::vector<std::string> report_columns();
std::string render_report_csv(const std::vector<AggregateRow>& aggregates);
void emit_report(const std::vector<AggregateRow>& aggregates, const std::string& path);

// Built-in sanitizer methods for experiments.
inline constexpr const char* kMethodDpGtrNdp = "dp-gtr-ndp";
inline constexpr const char* kMethodDpGtrJem = "dp-gtr-jem";
inline constexpr const char* kMethodDpPrompt = "dp-prompt";

// `base` supplies everything except temperature; JEM requires base.epsilon2.
Sanitizer make_method_sanitizer(const std::string& method, double temperature,
                                const PipelineConfig& base, const PipelineServices& services);

struct ExperimentSpec {
  std::vector<std::string> methods{kMethodDpGtrNdp, kMethodDpPrompt};
  std::vector<double> temperatures{0.1, 0.15, 0.2, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  int repeats = 5;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  std::string answer_model;
};

// Rows in (method, temperature, repeat, record) order.
std::vector<EvalRow> run_experiment(const std::vector<QARecord>& records,
                                    const ExperimentSpec& spec, const PipelineConfig& base,
                                    const PipelineServices& services, LlmService& answerer);

// Synthetic fixtures whose vocabulary the mock model knows how to perturb.
std::vector<QARecord> make_synthetic_csqa(std::size_t n, std::uint64_t seed);
std::vector<QARecord> make_synthetic_docvqa(std::size_t n, std::uint64_t seed);

nlohmann::json to_csqa_json(const QARecord& record);
nlohmann::json to_docvqa_json(const QARecord& record);

}  // namespace dpgtr
