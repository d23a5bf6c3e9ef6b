#include "dpgtr/rewriting.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "dpgtr/parallel.hpp"
#include "dpgtr/text.hpp"

namespace dpgtr {

std::string render_paraphrase_instruction(std::string_view tmpl, std::string_view prompt) {
  static constexpr std::string_view kSlot = "{prompt}";
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = tmpl.find(kSlot, pos);
    if (hit == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, hit - pos));
    out.append(prompt);
    pos = hit + kSlot.size();
  }
  return out;
}

const char* to_string(RewriteMode mode) {
  return mode == RewriteMode::whitebox ? "whitebox" : "blackbox";
}

void RewriteParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError(fmt::format("rewrite temperature must be positive, got {}", temperature));
  }
  if (max_tokens <= 0) throw DomainError("max_tokens must be positive");
  if (mode == RewriteMode::whitebox && !bounds) {
    throw DomainError("whitebox rewriting requires clip bounds");
  }
  if (epsilon_per_token && bounds) {
    double expected = dpgtr::epsilon_per_token(temperature, *bounds);
    if (std::abs(expected - *epsilon_per_token) > 1e-9 * std::max(1.0, expected)) {
      throw DomainError(fmt::format(
          "epsilon_per_token {} disagrees with temperature {} under bounds width {} (expected {})",
          *epsilon_per_token, temperature, bounds->range(), expected));
    }
  }
}

nlohmann::json to_json(const ParaphraseGroup& group) {
  nlohmann::json rewrites = nlohmann::json::array();
  for (const auto& r : group.rewrites) {
    rewrites.push_back({{"text", r.text},
                        {"temperature", r.params.temperature},
                        {"epsilon_per_token", r.epsilon_per_token},
                        {"tokens", r.tokens_generated},
                        {"retries", r.retries}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : group.failures) {
    failures.push_back({{"slot", f.slot},
                        {"temperature", f.temperature},
                        {"reason", f.reason},
                        {"tokens", f.tokens_generated}});
  }
  return {{"source", group.source},
          {"rewrites", std::move(rewrites)},
          {"failures", std::move(failures)},
          {"created_at", group.created_at}};
}

// ---------------------------------------------------------------------------
// Schedules

RewriteSchedule::RewriteSchedule(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw DomainError("rewrite schedule is empty");
  for (const auto& e : entries_) {
    if (!(e.temperature > 0.0)) throw DomainError("schedule temperatures must be positive");
    if (e.count == 0) throw DomainError("schedule counts must be positive");
  }
}

RewriteSchedule RewriteSchedule::uniform(double temperature, std::size_t m) {
  return RewriteSchedule({{temperature, m}});
}

RewriteSchedule RewriteSchedule::sweep(double lo, double hi, double step, std::size_t count) {
  if (!(step > 0.0) || !(lo > 0.0) || hi < lo) {
    throw DomainError(fmt::format("invalid sweep {}:{}:{}", lo, hi, step));
  }
  std::vector<Entry> entries;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    // Round to 1e-9 so 0.5 + 6*0.1 prints as 1.1.
    double t = std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9;
    entries.push_back({t, count});
  }
  return RewriteSchedule(std::move(entries));
}

RewriteSchedule RewriteSchedule::parse_sweep(std::string_view spec, std::size_t count) {
  auto first = spec.find(':');
  auto second = first == std::string_view::npos ? first : spec.find(':', first + 1);
  if (second == std::string_view::npos) {
    throw ConfigError(fmt::format("schedule '{}' is not lo:hi:step", spec));
  }
  try {
    double lo = std::stod(std::string(spec.substr(0, first)));
    double hi = std::stod(std::string(spec.substr(first + 1, second - first - 1)));
    double step = std::stod(std::string(spec.substr(second + 1)));
    return sweep(lo, hi, step, count);
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("schedule '{}' is not lo:hi:step", spec));
  }
}

std::size_t RewriteSchedule::total() const {
  std::size_t m = 0;
  for (const auto& e : entries_) m += e.count;
  return m;
}

bool RewriteSchedule::is_uniform() const {
  return std::all_of(entries_.begin(), entries_.end(), [&](const Entry& e) {
    return e.temperature == entries_.front().temperature;
  });
}

std::vector<double> RewriteSchedule::slot_temperatures() const {
  std::vector<double> out;
  for (const auto& e : entries_) out.insert(out.end(), e.count, e.temperature);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::string eos) : tokens_(std::move(tokens)) {
  auto it = std::find(tokens_.begin(), tokens_.end(), eos);
  if (it == tokens_.end()) {
    tokens_.push_back(eos);
    it = tokens_.end() - 1;
  }
  eos_ = static_cast<std::size_t>(it - tokens_.begin());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DomainError(fmt::format("duplicate vocabulary token '{}'", tokens_[i]));
    }
  }
  if (tokens_.size() < 2) throw DomainError("vocabulary needs at least one token besides EOS");
}

std::optional<std::size_t> Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Paraphrasing

Rewrite paraphrase_whitebox(const std::string& prompt, const RewriteParams& params,
                            const WhiteboxEngine& engine, Rng& rng, PrivacyLedger& ledger) {
  if (params.mode != RewriteMode::whitebox) throw DomainError("params are not in whitebox mode");
  params.validate();
  const ClipBounds& bounds = *params.bounds;
  const double eps = dpgtr::epsilon_per_token(params.temperature, bounds);

  std::vector<std::string> context =
      split_whitespace(render_paraphrase_instruction(params.prompt_template, prompt));
  std::vector<std::string> output;
  std::uint64_t draws = 0;

  auto charge = [&] {
    ledger.append({LedgerStage::rewrite, "em_decode", eps, draws,
                   fmt::format("whitebox T={}", params.temperature), false, params.temperature});
  };

  try {
    for (int step = 0; step < params.max_tokens; ++step) {
      LogitVector u = engine.logits(DecodeStep{context, static_cast<std::size_t>(step)});
      if (u.vocab_size() != engine.vocab.size()) {
        throw DomainError(fmt::format("logit oracle returned {} scores for a vocabulary of {}",
                                      u.vocab_size(), engine.vocab.size()));
      }
      std::size_t v = em_sample(clip_logits(u, bounds), params.temperature, rng);
      ++draws;
      if (v == engine.vocab.eos()) break;
      output.push_back(engine.vocab.token(v));
      context.push_back(engine.vocab.token(v));
    }
  } catch (const std::exception& e) {
    charge();
    throw RewriteError(fmt::format("logit oracle failed after {} tokens: {}", draws, e.what()),
                       draws);
  }
  charge();

  Rewrite r;
  r.text = join(output, " ");
  r.params = params;
  r.tokens_generated = draws;
  r.epsilon_per_token = eps;
  return r;
}

Rewrite paraphrase_blackbox(const std::string& prompt, const RewriteParams& params,
                            const BlackboxEngine& engine, PrivacyLedger& ledger,
                            std::uint64_t seed) {
  if (params.mode != RewriteMode::blackbox) throw DomainError("params are not in blackbox mode");
  if (engine.client == nullptr) throw DomainError("blackbox engine has no completion client");
  params.validate();
  const ClipBounds bounds = params.bounds.value_or(engine.nominal_bounds);
  const double eps = dpgtr::epsilon_per_token(params.temperature, bounds);

  ChatRequest req;
  req.model = engine.model;
  req.messages.push_back(
      {ChatRole::user, render_paraphrase_instruction(params.prompt_template, prompt)});
  req.temperature = params.temperature;
  req.max_tokens = params.max_tokens;
  req.seed = seed;

  ChatResponse resp;
  try {
    resp = call_with_retries([&] { return engine.client->complete(req); }, engine.retry,
                             engine.sleep, seed);
  } catch (const LlmError& e) {
    throw RewriteError(fmt::format("paraphrase request failed: {}", e.what()), 0, e.attempts());
  }

  std::uint64_t tokens = resp.usage_reported
                             ? resp.tokens_generated
                             : static_cast<std::uint64_t>(params.max_tokens);
  if (tokens > static_cast<std::uint64_t>(params.max_tokens)) {
    // Charge what the service says it generated, then reject the rewrite.
    ledger.append({LedgerStage::rewrite, "temperature_sampling", eps, tokens,
                   fmt::format("blackbox T={} (over max_tokens)", params.temperature), true,
                   params.temperature});
    throw RewriteError(fmt::format("service generated {} tokens with max_tokens={}", tokens,
                                   params.max_tokens),
                       tokens, resp.attempts);
  }
  ledger.append({LedgerStage::rewrite, "temperature_sampling", eps, tokens,
                 fmt::format("blackbox T={}{}", params.temperature,
                             resp.usage_reported ? "" : " (usage missing, charged max_tokens)"),
                 true, params.temperature});

  Rewrite r;
  r.text = resp.text;
  r.params = params;
  r.tokens_generated = tokens;
  r.epsilon_per_token = eps;
  r.retries = resp.attempts - 1;
  return r;
}

ParaphraseGroup rewrite_group(const std::string& prompt, const RewriteSchedule& schedule,
                              const RewriteEngine& engine, std::uint64_t root_seed,
                              PrivacyLedger& ledger, const GroupOptions& options) {
  const std::vector<double> temps = schedule.slot_temperatures();
  const std::size_t m = temps.size();
  const bool whitebox = std::holds_alternative<WhiteboxEngine>(engine);

  struct Slot {
    std::optional<Rewrite> rewrite;
    std::optional<RewriteFailure> failure;
    PrivacyLedger ledger;
  };
  std::vector<Slot> slots(m);
  const Rng root(root_seed);

  parallel_for(m, options.parallelism, [&](std::size_t i) {
    RewriteParams params = options.base;
    params.mode = whitebox ? RewriteMode::whitebox : RewriteMode::blackbox;
    params.temperature = temps[i];
    params.epsilon_per_token.reset();
    Slot& slot = slots[i];
    try {
      if (whitebox) {
        Rng rng = root.derive(i);
        slot.rewrite = paraphrase_whitebox(prompt, params, std::get<WhiteboxEngine>(engine), rng,
                                           slot.ledger);
      } else {
        slot.rewrite = paraphrase_blackbox(prompt, params, std::get<BlackboxEngine>(engine),
                                           slot.ledger, Rng::derive_seed(root_seed, i));
      }
    } catch (const RewriteError& e) {
      slot.failure = RewriteFailure{i, temps[i], e.what(), e.tokens_generated()};
    }
  });

  ParaphraseGroup group;
  group.source = prompt;
  for (auto& slot : slots) {
    ledger.append_all(slot.ledger);
    if (slot.rewrite) group.rewrites.push_back(std::move(*slot.rewrite));
    if (slot.failure) group.failures.push_back(std::move(*slot.failure));
  }
  if (group.rewrites.empty()) {
    throw GroupError(fmt::format("all {} rewrites failed; first error: {}", m,
                                 group.failures.empty() ? "none" : group.failures.front().reason),
                     std::move(group.failures));
  }
  return group;
}

// ---------------------------------------------------------------------------
// Calibration

void CalibrationAccumulator::add(double x) {
  if (!std::isfinite(x)) throw DomainError("calibration sample is not finite");
  ++n_;
  double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

CalibrationStats CalibrationAccumulator::stats() const {
  CalibrationStats s;
  s.sample_count = n_;
  s.mean = mean_;
  s.std = n_ > 0 ? std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_))) : 0.0;
  return s;
}

ClipBounds calibrate_bounds(const CalibrationStats& stats) {
  if (stats.sample_count < 2) {
    throw DomainError(
        fmt::format("calibration needs at least 2 samples, got {}", stats.sample_count));
  }
  if (!(stats.std > 0.0)) {
    throw DomainError("calibration samples have zero spread; bounds would be degenerate");
  }
  return ClipBounds(stats.mean, stats.mean + 4.0 * stats.std);
}

ClipBounds calibrate_bounds(std::span<const double> logit_samples) {
  CalibrationAccumulator acc;
  for (double x : logit_samples) acc.add(x);
  return calibrate_bounds(acc.stats());
}

CalibrationStats read_calibration_samples(std::istream& in) {
  CalibrationAccumulator acc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto words = split_whitespace(line);
    if (words.empty()) continue;
    if (words.size() != 1) {
      throw ConfigError(fmt::format("line {}: expected one number", lineno));
    }
    try {
      std::size_t used = 0;
      double x = std::stod(words[0], &used);
      if (used != words[0].size()) throw std::invalid_argument("trailing characters");
      acc.add(x);
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("line {}: '{}' is not a number", lineno, words[0]));
    }
  }
  return acc.stats();
}

// ---------------------------------------------------------------------------
// Toy white-box oracle

WhiteboxEngine make_toy_whitebox_engine(const std::string& prompt) {
  std::vector<std::string> source = split_whitespace(prompt);
  std::set<std::string> words(source.begin(), source.end());
  std::unordered_map<std::string, std::vector<std::string>> alternatives;
  for (const auto& [word, alts] : mock_synonym_table()) {
    for (const auto& s : source) {
      if (normalize_word(s) == word) {
        alternatives[s] = alts;
        words.insert(alts.begin(), alts.end());
      }
    }
  }
  words.erase("</s>");
  Vocabulary vocab(std::vector<std::string>(words.begin(), words.end()));

  auto provider = [vocab, source, alternatives](const DecodeStep& state) {
    std::vector<double> u(vocab.size(), 0.0);
    if (state.step < source.size()) {
      const std::string& target = source[state.step];
      u[*vocab.index_of(target)] = 8.0;
      if (auto it = alternatives.find(target); it != alternatives.end()) {
        for (const auto& alt : it->second) u[*vocab.index_of(alt)] = 6.0;
      }
      u[vocab.eos()] = -4.0;
    } else {
      u[vocab.eos()] = 10.0;
    }
    return LogitVector(std::move(u));
  };
  return WhiteboxEngine{std::move(vocab), std::move(provider)};
}

}  // namespace dpgtr
