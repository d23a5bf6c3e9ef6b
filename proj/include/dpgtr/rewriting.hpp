#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/error.hpp"
#include "dpgtr/llm_client.hpp"
#include "dpgtr/random.hpp"

namespace dpgtr {

inline constexpr std::string_view kDefaultParaphraseTemplate =
    "Paraphrase the following question. Output only the paraphrase:\n{prompt}";

// Substitutes every "{prompt}" in the template.
std::string render_paraphrase_instruction(std::string_view tmpl, std::string_view prompt);

enum class RewriteMode { whitebox, blackbox };

const char* to_string(RewriteMode mode);

struct RewriteParams {
  RewriteMode mode = RewriteMode::blackbox;
  double temperature = 1.0;
  std::optional<double> epsilon_per_token;
  int max_tokens = 64;
  std::string prompt_template = std::string(kDefaultParaphraseTemplate);
  std::optional<ClipBounds> bounds;  // required for whitebox

  void validate() const;
};

struct Rewrite {
  std::string text;
  RewriteParams params;
  std::uint64_t tokens_generated = 0;
  double epsilon_per_token = 0.0;
  int retries = 0;
};

struct RewriteFailure {
  std::size_t slot = 0;
  double temperature = 0.0;
  std::string reason;
  std::uint64_t tokens_generated = 0;
};

// The m Stage-1 rewrites of one prompt, in schedule order.
struct ParaphraseGroup {
  std::string source;
  std::vector<Rewrite> rewrites;
  std::vector<RewriteFailure> failures;  // partial-failure warnings
  std::string created_at;
};

nlohmann::json to_json(const ParaphraseGroup& group);

// A single rewrite failed. Tokens already emitted are charged before this is
// thrown.
class RewriteError : public Error {
 public:
  RewriteError(const std::string& what, std::uint64_t tokens_generated, int attempts = 1)
      : Error(what), tokens_generated_(tokens_generated), attempts_(attempts) {}
  std::uint64_t tokens_generated() const { return tokens_generated_; }
  int attempts() const { return attempts_; }

 private:
  std::uint64_t tokens_generated_;
  int attempts_;
};

// Every rewrite of a group failed.
class GroupError : public Error {
 public:
  GroupError(const std::string& what, std::vector<RewriteFailure> failures)
      : Error(what), failures_(std::move(failures)) {}
  const std::vector<RewriteFailure>& failures() const { return failures_; }

 private:
  std::vector<RewriteFailure> failures_;
};

// Per-temperature rewrite counts.
class RewriteSchedule {
 public:
  struct Entry {
    double temperature;
    std::size_t count;
  };

  explicit RewriteSchedule(std::vector<Entry> entries);

  static RewriteSchedule uniform(double temperature, std::size_t m);
  // lo, lo+step, ..., hi (inclusive within rounding), `count` rewrites each.
  static RewriteSchedule sweep(double lo, double hi, double step, std::size_t count = 1);
  // Parses "lo:hi:step".
  static RewriteSchedule parse_sweep(std::string_view spec, std::size_t count = 1);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t total() const;
  bool is_uniform() const;
  // One temperature per rewrite slot, in order.
  std::vector<double> slot_temperatures() const;

 private:
  std::vector<Entry> entries_;
};

// Whitespace-token vocabulary with an explicit end-of-sequence symbol.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, std::string eos = "</s>");

  std::size_t size() const { return tokens_.size(); }
  std::size_t eos() const { return eos_; }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  std::optional<std::size_t> index_of(const std::string& token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t eos_;
};

// Decoding state handed to the logit oracle at each step.
struct DecodeStep {
  std::span<const std::string> context;  // instruction tokens + emitted tokens
  std::size_t step;                      // number of tokens emitted so far
};

using LogitsProvider = std::function<LogitVector(const DecodeStep&)>;

struct WhiteboxEngine {
  Vocabulary vocab;
  LogitsProvider logits;
};

struct BlackboxEngine {
  LlmService* client = nullptr;
  std::string model;
  // Nominal clip bounds used only for accounting; the service cannot enforce
  // them.
  ClipBounds nominal_bounds = ClipBounds::with_width(9.7);
  RetryPolicy retry{3, std::chrono::milliseconds(0), 2.0, 0.0};
  Sleeper sleep;
};

using RewriteEngine = std::variant<WhiteboxEngine, BlackboxEngine>;

// Exponential-mechanism decoding over clipped logits.
Rewrite paraphrase_whitebox(const std::string& prompt, const RewriteParams& params,
                            const WhiteboxEngine& engine, Rng& rng, PrivacyLedger& ledger);

// Temperature-mapped completion from a remote service, charged against
// nominal bounds.
Rewrite paraphrase_blackbox(const std::string& prompt, const RewriteParams& params,
                            const BlackboxEngine& engine, PrivacyLedger& ledger,
                            std::uint64_t seed = 0);

struct GroupOptions {
  RewriteParams base;  // template, max_tokens, bounds; temperature comes from the schedule
  std::size_t parallelism = 1;
};

// Produces one independent rewrite per schedule slot; slot i draws from
// Rng(root_seed).derive(i). Ledger entries are appended in slot order.
ParaphraseGroup rewrite_group(const std::string& prompt, const RewriteSchedule& schedule,
                              const RewriteEngine& engine, std::uint64_t root_seed,
                              PrivacyLedger& ledger, const GroupOptions& options = {});

struct CalibrationStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::uint64_t sample_count = 0;
};

// Streaming mean / population variance (Welford).
class CalibrationAccumulator {
 public:
  void add(double x);
  CalibrationStats stats() const;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Clip bounds [μ, μ + 4σ] from observed logits.
ClipBounds calibrate_bounds(std::span<const double> logit_samples);
ClipBounds calibrate_bounds(const CalibrationStats& stats);

// One real per line; blank lines skipped.
CalibrationStats read_calibration_samples(std::istream& in);

// Toy white-box oracle: copies the prompt with synonym alternatives from the
// mock table, then EOS. Lets the white-box path run without model weights.
WhiteboxEngine make_toy_whitebox_engine(const std::string& prompt);

}  // namespace dpgtr
