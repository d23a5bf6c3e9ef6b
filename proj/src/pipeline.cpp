#include "dpgtr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "dpgtr/text.hpp"

namespace dpgtr {
namespace {

constexpr std::uint64_t kKeywordStream = 0x6b6579776f726473ULL;
constexpr std::uint64_t kStage3Stream = 0x7374616765332121ULL;

nlohmann::json epsilon_json(double eps) {
  if (std::isinf(eps)) return "inf";
  return eps;
}

nlohmann::json scored_json(const ScoredParaphrase& s) {
  return {{"index", s.index}, {"text", s.text}, {"perplexity", s.perplexity}};
}

}  // namespace

void PipelineConfig::validate() const {
  if (m == 0) throw ConfigError("m must be at least 1");
  if (k == 0) throw ConfigError("K must be at least 1");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (release_method == ReleaseMethod::DP) {
    if (!epsilon2) throw ConfigError("DP keyword release requires epsilon2");
    if (!(*epsilon2 > 0.0)) throw ConfigError("epsilon2 must be positive");
  }
  if (schedule) {
    if (schedule->total() != m) {
      throw ConfigError(
          fmt::format("schedule provides {} rewrites but m = {}", schedule->total(), m));
    }
  } else if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  if (stage3_temperature < 0.0) throw ConfigError("stage-3 temperature must be >= 0");
  if (max_regenerations < 0 || max_regenerations > 2) {
    throw ConfigError("max_regenerations must be within [0, 2]");
  }
}

RewriteSchedule PipelineConfig::effective_schedule() const {
  return schedule ? *schedule : RewriteSchedule::uniform(temperature, m);
}

Clock default_clock() {
  return [] {
    std::time_t t;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
      t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
      t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
}

GroupRewriter default_rewriter(const PipelineServices& services) {
  LlmService* client = services.client;
  auto whitebox = services.whitebox;
  RetryPolicy retry = services.retry;
  Sleeper sleep = services.sleep;
  return [=](const std::string& prompt, const PipelineConfig& config, PrivacyLedger& ledger) {
    GroupOptions options;
    options.base.mode = config.mode;
    options.base.max_tokens = config.max_tokens;
    options.base.prompt_template = config.paraphrase_template;
    options.base.bounds = config.bounds;
    options.parallelism = config.parallelism;
    if (config.mode == RewriteMode::whitebox) {
      WhiteboxEngine engine = whitebox ? whitebox(prompt) : make_toy_whitebox_engine(prompt);
      return rewrite_group(prompt, config.effective_schedule(), engine, config.seed, ledger,
                           options);
    }
    if (client == nullptr) throw ConfigError("black-box rewriting needs a completion client");
    BlackboxEngine engine{client, config.model, config.bounds, retry, sleep};
    return rewrite_group(prompt, config.effective_schedule(), engine, config.seed, ledger,
                         options);
  };
}

GroupRewriter identity_rewriter() {
  return [](const std::string& prompt, const PipelineConfig& config, PrivacyLedger&) {
    ParaphraseGroup group;
    group.source = prompt;
    for (std::size_t i = 0; i < config.m; ++i) {
      Rewrite r;
      r.text = prompt;
      r.params.temperature = config.temperature;
      group.rewrites.push_back(std::move(r));
    }
    return group;
  };
}

SanitizedResult run_dp_gtr(const std::string& prompt, const PipelineConfig& config,
                           const PipelineServices& services) {
  return run_dp_gtr(prompt, config, default_rewriter(services), services);
}

SanitizedResult run_dp_gtr(const std::string& prompt, const PipelineConfig& config,
                           const GroupRewriter& rewriter, const PipelineServices& services) {
  config.validate();
  SanitizedResult result;
  result.original = prompt;
  result.uniform_schedule = config.effective_schedule().is_uniform();
  nlohmann::json trail = {{"original", prompt}};

  auto fail = [&](const std::string& stage, const std::exception& e) -> PipelineError {
    trail["ledger"] = to_json(result.ledger);
    trail["ledger_total"] = result.ledger.total();
    return PipelineError(fmt::format("{} failed: {}", stage, e.what()), stage, trail);
  };

  // Stage 1: group rewriting.
  try {
    result.group = rewriter(prompt, config, result.ledger);
  } catch (const Error& e) {
    throw fail("stage1_rewrite", e);
  }
  if (result.group.rewrites.empty()) {
    throw fail("stage1_rewrite", Error("rewriter returned an empty group"));
  }
  if (result.group.created_at.empty()) {
    result.group.created_at = services.clock ? services.clock() : default_clock()();
  }
  trail["group"] = to_json(result.group);

  // Stage 2a: consensus keywords. Reads only the group.
  try {
    result.histogram = build_histogram(result.group);
    if (config.release_method == ReleaseMethod::NDP) {
      result.released = topk_ndp(result.histogram, config.k, result.ledger);
    } else {
      std::size_t k = std::min(config.k, result.histogram.counts.size());
      if (k == 0) {
        throw DomainError("histogram is empty; nothing to release");
      }
      Rng rng(Rng::derive_seed(config.seed, kKeywordStream));
      result.released = topk_dp(result.histogram, k, *config.epsilon2, config.topk_strategy, rng,
                                result.ledger);
      if (k < config.k) {
        result.released.warnings.push_back(fmt::format(
            "histogram has {} distinct words; released K={} instead of {}", k, k, config.k));
      }
    }
  } catch (const Error& e) {
    throw fail("stage2_keywords", e);
  }
  trail["histogram"] = to_json(result.histogram);
  trail["released"] = to_json(result.released);

  // Stage 2b: lowest-perplexity exemplar.
  try {
    std::unique_ptr<PerplexityScorer> scorer =
        services.scorer ? services.scorer(result.group)
                        : std::make_unique<UnigramPerplexityScorer>(
                              UnigramPerplexityScorer::fit(result.group));
    result.exemplar = select_exemplar(result.group, *scorer, result.ledger);
  } catch (const Error& e) {
    throw fail("stage2_exemplar", e);
  }
  trail["exemplar"] = scored_json(result.exemplar);

  // Stage 3: the original prompt is not an input here.
  try {
    if (services.client == nullptr) throw ConfigError("stage 3 needs a completion client");
    FinalPromptRequest req = FinalPromptRequest::make(result.exemplar.text, result.released.words,
                                                      config.stage3_temperature);
    GenerateOptions options;
    options.model = config.model;
    options.max_tokens = std::max(config.max_tokens, 16);
    options.max_regenerations = config.max_regenerations;
    options.fallback_to_exemplar = config.fallback_to_exemplar;
    options.retry = services.retry;
    options.sleep = services.sleep;
    options.seed = Rng::derive_seed(config.seed, kStage3Stream);
    SanitizeOutcome out = generate_sanitized(req, *services.client, result.ledger, options);
    result.final_prompt = std::move(out.final_prompt);
    result.sanitized = std::move(out.sanitized);
    result.leakage_flag = out.leakage_flag;
    result.leaked_words = std::move(out.leaked_words);
  } catch (const Error& e) {
    throw fail("stage3_generate", e);
  }
  return result;
}

nlohmann::json to_json(const PrivacyLedger& ledger) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : ledger.entries()) {
    nlohmann::json j = {{"stage", to_string(e.stage)},
                        {"mechanism", e.mechanism},
                        {"epsilon_per_unit", epsilon_json(e.epsilon_per_unit)},
                        {"units", e.units},
                        {"subtotal", e.contribution()},
                        {"note", e.note},
                        {"nominal", e.nominal}};
    if (e.temperature) j["temperature"] = *e.temperature;
    entries.push_back(std::move(j));
  }
  return entries;
}

nlohmann::json to_json(const SanitizedResult& r) {
  return {{"original", r.original},
          {"group", to_json(r.group)},
          {"histogram", to_json(r.histogram)},
          {"released", to_json(r.released)},
          {"exemplar", scored_json(r.exemplar)},
          {"final_prompt", r.final_prompt},
          {"sanitized", r.sanitized},
          {"leakage_flag", r.leakage_flag},
          {"leaked_words", r.leaked_words},
          {"ledger", to_json(r.ledger)},
          {"ledger_total", r.ledger.total()}};
}

std::string budget_report(const PrivacyLedger& ledger, bool uniform_schedule) {
  std::string out = fmt::format("{:<16} {:<22} {:>12} {:>8} {:>14}\n", "stage", "mechanism",
                                "eps/unit", "units", "subtotal");
  for (const auto& e : ledger.entries()) {
    std::string eps = std::isinf(e.epsilon_per_unit) ? "inf" : fmt::format("{}", e.epsilon_per_unit);
    out += fmt::format("{:<16} {:<22} {:>12} {:>8} {:>14}{}\n", to_string(e.stage), e.mechanism,
                       eps, e.units, e.contribution(), e.nominal ? "  (nominal)" : "");
  }
  out += fmt::format("total: {}\n", ledger.total());

  std::vector<const LedgerEntry*> rewrites;
  double eps2 = 0.0;
  bool has_release = false;
  for (const auto& e : ledger.entries()) {
    if (e.stage == LedgerStage::rewrite) rewrites.push_back(&e);
    if (e.stage == LedgerStage::keyword_release) {
      eps2 += e.contribution();
      has_release = true;
    }
  }
  if (rewrites.empty()) return out;

  const std::string release_sym = has_release ? " + ε₂" : "";
  const std::string release_val = has_release ? fmt::format(" + {}", eps2) : "";
  if (uniform_schedule) {
    const double eps1 = rewrites.front()->epsilon_per_unit;
    std::uint64_t total_units = 0;
    bool equal_n = true;
    for (const auto* e : rewrites) {
      total_units += e->units;
      equal_n = equal_n && e->units == rewrites.front()->units;
    }
    const std::size_t m = rewrites.size();
    if (equal_n) {
      out += fmt::format("closed form: m·n·ε₁{} = {}·{}·{}{} = {}\n", release_sym, m,
                         rewrites.front()->units, eps1, release_val, ledger.total());
    } else {
      out += fmt::format("closed form: m·n·ε₁{} with n = mean tokens per rewrite = {}·{}·{}{} = {}\n",
                         release_sym, m,
                         static_cast<double>(total_units) / static_cast<double>(m), eps1,
                         release_val, ledger.total());
    }
  } else {
    std::map<double, std::pair<std::uint64_t, double>> by_temperature;  // T -> (Σn, ε/token)
    for (const auto* e : rewrites) {
      double t = e->temperature.value_or(0.0);
      by_temperature[t].first += e->units;
      by_temperature[t].second = e->epsilon_per_unit;
    }
    out += fmt::format("non-uniform schedule: Σᵢ nᵢ·εᵢ{}\n", release_sym);
    for (const auto& [t, agg] : by_temperature) {
      out += fmt::format("  T={}: n={} eps/token={} subtotal={}\n", t, agg.first, agg.second,
                         agg.second * static_cast<double>(agg.first));
    }
  }
  return out;
}

std::string budget_report(const SanitizedResult& result) {
  return budget_report(result.ledger, result.uniform_schedule);
}

void append_audit_record(const std::string& path, const nlohmann::json& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(fmt::format("cannot open audit file '{}'", path));
  out << record.dump() << '\n';
  if (!out) throw Error(fmt::format("failed writing audit file '{}'", path));
}

}  // namespace dpgtr
