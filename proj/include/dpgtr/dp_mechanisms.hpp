#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpgtr/random.hpp"

namespace dpgtr {

inline constexpr double kInfiniteEpsilon = std::numeric_limits<double>::infinity();

// Logit clipping interval [b_min, b_max]; always strictly nonempty.
class ClipBounds {
 public:
  ClipBounds(double b_min, double b_max);

  double b_min() const { return b_min_; }
  double b_max() const { return b_max_; }
  double range() const { return b_max_ - b_min_; }

  // Bounds [0, width].
  static ClipBounds with_width(double width) { return ClipBounds(0.0, width); }

  bool operator==(const ClipBounds&) const = default;

 private:
  double b_min_;
  double b_max_;
};

// Per-step token scores, one per vocabulary entry.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values);

  std::size_t vocab_size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const LogitVector&) const = default;

 private:
  std::vector<double> values_;
};

// Per-token privacy loss 2(b_max - b_min)/T of exponential-mechanism decoding.
double epsilon_per_token(double temperature, const ClipBounds& bounds);

// Inverse of epsilon_per_token.
double temperature_for_epsilon(double epsilon_per_token, const ClipBounds& bounds);

LogitVector clip_logits(const LogitVector& u, const ClipBounds& bounds);

// softmax(scores / T), computed with max subtraction.
std::vector<double> softmax(std::span<const double> scores, double temperature);

// Draws an index with probability proportional to exp(score / T). Works for
// any nonempty score list; em_sample is the logit-vector entry point.
std::size_t sample_softmax(std::span<const double> scores, double temperature, Rng& rng);

// Exponential-mechanism token selection over already clipped logits.
std::size_t em_sample(const LogitVector& u_clipped, double temperature, Rng& rng);

enum class LedgerStage { rewrite, keyword_release, post_process };

const char* to_string(LedgerStage stage);

struct LedgerEntry {
  LedgerStage stage = LedgerStage::rewrite;
  std::string mechanism;
  double epsilon_per_unit = 0.0;  // kInfiniteEpsilon allowed for post_process
  std::uint64_t units = 1;
  std::string note;
  // Set when epsilon comes from operator-configured bounds that the remote
  // generator cannot enforce.
  bool nominal = false;
  // Sampling temperature behind a rewrite entry, when there is one.
  std::optional<double> temperature;

  // epsilon_per_unit * units, or 0 for post-processing.
  double contribution() const;
};

// Sequential-composition accountant. Appends are not synchronized; callers
// that fan out must serialize them.
class PrivacyLedger {
 public:
  void append(LedgerEntry entry);
  void append_all(const PrivacyLedger& other);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  double total() const;
  double total(LedgerStage stage) const;

 private:
  std::vector<LedgerEntry> entries_;
};

inline double ledger_total(const PrivacyLedger& ledger) { return ledger.total(); }

// Σ token_counts[i] · epsilon_per_token(temperatures[i], bounds).
double schedule_total(std::span<const std::uint64_t> token_counts,
                      std::span<const double> temperatures, const ClipBounds& bounds);

}  // namespace dpgtr
