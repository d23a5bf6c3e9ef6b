#include "dpgtr/dp_mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <fmt/format.h>

#include "dpgtr/error.hpp"

namespace dpgtr {
namespace {

// Sums ε·units grouped by ε in ascending ε order. Grouping makes the total
// independent of entry order and reduces a uniform ledger to a single
// product ε·Σunits.
class CompositionSum {
 public:
  void add(double epsilon, std::uint64_t units) { units_by_epsilon_[epsilon] += units; }

  double value() const {
    double total = 0.0;
    for (const auto& [epsilon, units] : units_by_epsilon_) {
      total += epsilon * static_cast<double>(units);
    }
    return total;
  }

 private:
  std::map<double, std::uint64_t> units_by_epsilon_;
};

}  // namespace

ClipBounds::ClipBounds(double b_min, double b_max) : b_min_(b_min), b_max_(b_max) {
  if (!std::isfinite(b_min) || !std::isfinite(b_max)) {
    throw DomainError("clip bounds must be finite");
  }
  if (!(b_min < b_max)) {
    throw DomainError(fmt::format("clip bounds require b_min < b_max, got [{}, {}]", b_min, b_max));
  }
}

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw DomainError("logit vector needs at least two vocabulary entries");
  }
}

double epsilon_per_token(double temperature, const ClipBounds& bounds) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError(fmt::format("temperature must be positive and finite, got {}", temperature));
  }
  return 2.0 * bounds.range() / temperature;
}

double temperature_for_epsilon(double epsilon, const ClipBounds& bounds) {
  if (!(epsilon > 0.0)) {
    throw DomainError(fmt::format("epsilon must be positive, got {}", epsilon));
  }
  return 2.0 * bounds.range() / epsilon;
}

LogitVector clip_logits(const LogitVector& u, const ClipBounds& bounds) {
  std::vector<double> out(u.values().begin(), u.values().end());
  for (double& v : out) v = std::clamp(v, bounds.b_min(), bounds.b_max());
  return LogitVector(std::move(out));
}

std::vector<double> softmax(std::span<const double> scores, double temperature) {
  if (scores.empty()) throw DomainError("softmax over an empty score list");
  if (!(temperature > 0.0)) {
    throw DomainError(fmt::format("temperature must be positive, got {}", temperature));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("non-finite logit");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp((scores[i] - top) / temperature);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

std::size_t sample_softmax(std::span<const double> scores, double temperature, Rng& rng) {
  if (scores.empty()) throw DomainError("cannot sample from an empty score list");
  if (!(temperature > 0.0)) {
    throw DomainError(fmt::format("temperature must be positive, got {}", temperature));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("non-finite logit");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> weights(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    weights[i] = std::exp((scores[i] - top) / temperature);
    z += weights[i];
  }
  const double target = rng.uniform() * z;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  // Rounding left target == z.
  return last_positive;
}

std::size_t em_sample(const LogitVector& u_clipped, double temperature, Rng& rng) {
  return sample_softmax(u_clipped.values(), temperature, rng);
}

const char* to_string(LedgerStage stage) {
  switch (stage) {
    case LedgerStage::rewrite:
      return "rewrite";
    case LedgerStage::keyword_release:
      return "keyword_release";
    case LedgerStage::post_process:
      return "post_process";
  }
  return "unknown";
}

double LedgerEntry::contribution() const {
  if (stage == LedgerStage::post_process) return 0.0;
  return epsilon_per_unit * static_cast<double>(units);
}

void PrivacyLedger::append(LedgerEntry entry) {
  if (std::isnan(entry.epsilon_per_unit) || entry.epsilon_per_unit < 0.0) {
    throw DomainError("ledger epsilon must be nonnegative");
  }
  if (std::isinf(entry.epsilon_per_unit) && entry.stage != LedgerStage::post_process) {
    throw DomainError("only post-processing entries may carry an infinite epsilon");
  }
  entries_.push_back(std::move(entry));
}

void PrivacyLedger::append_all(const PrivacyLedger& other) {
  for (const auto& e : other.entries_) append(e);
}

double PrivacyLedger::total() const {
  CompositionSum sum;
  for (const auto& e : entries_) {
    if (e.stage == LedgerStage::post_process) continue;
    sum.add(e.epsilon_per_unit, e.units);
  }
  return sum.value();
}

double PrivacyLedger::total(LedgerStage stage) const {
  if (stage == LedgerStage::post_process) return 0.0;
  CompositionSum sum;
  for (const auto& e : entries_) {
    if (e.stage == stage) sum.add(e.epsilon_per_unit, e.units);
  }
  return sum.value();
}

double schedule_total(std::span<const std::uint64_t> token_counts,
                      std::span<const double> temperatures, const ClipBounds& bounds) {
  if (token_counts.size() != temperatures.size()) {
    throw DomainError(fmt::format("schedule length mismatch: {} counts vs {} temperatures",
                                  token_counts.size(), temperatures.size()));
  }
  if (token_counts.empty()) throw DomainError("empty schedule");
  CompositionSum sum;
  for (std::size_t i = 0; i < token_counts.size(); ++i) {
    sum.add(epsilon_per_token(temperatures[i], bounds), token_counts[i]);
  }
  return sum.value();
}

}  // namespace dpgtr
