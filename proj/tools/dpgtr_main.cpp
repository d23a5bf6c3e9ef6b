// dpgtr command-line tool: calibrate, sanitize, evaluate, keywords, score, synth.

#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cli_config.hpp"
#include "dpgtr/consensus_keywords.hpp"
#include "dpgtr/error.hpp"
#include "dpgtr/text_metrics.hpp"

using namespace dpgtr;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// "@path" reads the prompt from a file; trailing newlines are dropped.
std::string resolve_text(const std::string& arg) {
  if (arg.empty() || arg[0] != '@') return arg;
  std::string text = read_file(arg.substr(1));
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path));
  out << content;
}

struct CalibrateArgs {
  std::string samples;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a) {
  std::ifstream in(a.samples);
  if (!in) throw ConfigError(fmt::format("cannot read samples '{}'", a.samples));
  CalibrationStats stats = read_calibration_samples(in);
  ClipBounds b(0.0, 1.0);
  try {
    b = calibrate_bounds(stats);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  json j = {{"b_min", b.b_min()},
            {"b_max", b.b_max()},
            {"mean", stats.mean},
            {"std", stats.std},
            {"samples", stats.sample_count}};
  write_output(a.out, j.dump(2) + "\n");
  return 0;
}

struct SanitizeArgs {
  std::string config;
  std::string prompt;
  std::optional<std::uint64_t> seed;
  std::string schedule;
  std::string audit;
  bool report = false;
};

int cmd_sanitize(const SanitizeArgs& a) {
  cli::CliConfig cfg = cli::load_config(a.config);
  if (a.seed) cfg.pipeline.seed = *a.seed;
  if (!a.schedule.empty()) {
    cfg.pipeline.schedule = RewriteSchedule::parse_sweep(a.schedule);
    cfg.pipeline.m = cfg.pipeline.schedule->total();
  }
  cfg.pipeline.validate();
  const std::string prompt = resolve_text(a.prompt);
  if (prompt.empty()) throw ConfigError("prompt is empty");

  cli::ServiceBundle bundle = cli::make_services(cfg);
  json record;
  int code = 0;
  try {
    SanitizedResult result = run_dp_gtr(prompt, cfg.pipeline, bundle.services);
    record = to_json(result);
    std::cout << record.dump(2) << "\n";
    if (a.report) std::cerr << budget_report(result);
  } catch (const PipelineError& e) {
    record = {{"error", e.what()}, {"stage", e.stage()}, {"partial", e.partial()}};
    std::cerr << "error: " << e.what() << "\n" << e.partial().dump(2) << "\n";
    code = kExitRuntime;
  }
  if (!a.audit.empty()) append_audit_record(a.audit, record);
  return code;
}

struct EvaluateArgs {
  std::string dataset;
  std::string format;
  std::string config;
  std::optional<int> repeats;
  std::string out;
  std::vector<std::string> methods;
  std::vector<double> temperatures;
  std::string schedule;
  std::string audit;
  std::optional<std::size_t> sample;
  std::optional<std::uint64_t> seed;
};

int cmd_evaluate(const EvaluateArgs& a) {
  cli::CliConfig cfg = cli::load_config(a.config);
  ExperimentSpec spec;
  spec.methods = a.methods.empty() ? cfg.evaluation.methods : a.methods;
  spec.temperatures = a.temperatures.empty() ? cfg.evaluation.temperatures : a.temperatures;
  spec.repeats = a.repeats.value_or(cfg.evaluation.repeats);
  spec.seed = a.seed.value_or(cfg.evaluation.seed);
  spec.parallelism = cfg.evaluation.parallelism;
  spec.answer_model = cfg.evaluation.answer_model;
  if (spec.repeats < 1) throw ConfigError("--repeats must be >= 1");
  if (spec.methods.empty() || spec.temperatures.empty()) {
    throw ConfigError("need at least one method and one temperature");
  }
  if (!a.schedule.empty()) {
    // Schedule mode: one row per method, labelled with the mean temperature.
    auto sched = RewriteSchedule::parse_sweep(a.schedule);
    cfg.pipeline.schedule = sched;
    cfg.pipeline.m = sched.total();
    auto temps = sched.slot_temperatures();
    spec.temperatures = {std::accumulate(temps.begin(), temps.end(), 0.0) /
                         static_cast<double>(temps.size())};
  }

  DatasetFormat format = parse_dataset_format(a.format);
  std::optional<SampleSpec> sample;
  if (a.sample) sample = SampleSpec{*a.sample, cfg.evaluation.sample_seed};
  else if (cfg.evaluation.sample_n) sample = SampleSpec{*cfg.evaluation.sample_n, cfg.evaluation.sample_seed};
  LoadResult loaded = load_dataset(a.dataset, format, sample);
  for (const auto& e : loaded.errors) {
    std::cerr << fmt::format("warning: record {}: {}\n", e.position, e.message);
  }
  require_healthy(loaded);
  if (loaded.records.empty()) throw DatasetError("dataset has no usable records");

  cli::ServiceBundle bundle = cli::make_services(cfg);
  auto rows = run_experiment(loaded.records, spec, cfg.pipeline, bundle.services, *bundle.client);
  if (!a.audit.empty()) {
    for (const auto& r : rows) append_audit_record(a.audit, to_json(r));
  }
  auto aggregates = aggregate(rows);
  std::size_t failed = 0;
  for (const auto& g : aggregates) failed += g.failed;
  if (failed > 0) std::cerr << fmt::format("warning: {} items failed and were excluded\n", failed);
  if (a.out.empty()) std::cout << render_report_csv(aggregates);
  else emit_report(aggregates, a.out);
  return 0;
}

struct KeywordsArgs {
  std::vector<std::string> texts;
  std::string file;
  std::size_t k = 10;
  std::string method = "ndp";
  std::optional<double> epsilon2;
  std::uint64_t seed = 0;
};

int cmd_keywords(const KeywordsArgs& a) {
  std::vector<std::string> texts;
  for (const auto& t : a.texts) texts.push_back(resolve_text(t));
  if (!a.file.empty()) {
    std::istringstream in(read_file(a.file));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) texts.push_back(line);
    }
  }
  if (texts.empty()) throw ConfigError("no rewrites given (use --text or --file)");
  KeywordHistogram hist = build_histogram(texts);
  PrivacyLedger ledger;
  ReleasedKeywords released;
  if (a.method == "ndp") {
    released = topk_ndp(hist, a.k, ledger);
  } else if (a.method == "dp") {
    if (!a.epsilon2) throw ConfigError("--method dp requires --epsilon2");
    Rng rng(a.seed);
    try {
      released = topk_dp(hist, a.k, *a.epsilon2, TopKStrategy::peel, rng, ledger);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError(fmt::format("--method must be ndp or dp, got '{}'", a.method));
  }
  json j = {{"histogram", to_json(hist)},
            {"released", to_json(released)},
            {"ledger", to_json(ledger)},
            {"ledger_total", ledger.total()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct ScoreArgs {
  std::string reference;
  std::string hypothesis;
};

int cmd_score(const ScoreArgs& a) {
  std::string ref = resolve_text(a.reference);
  std::string hyp = resolve_text(a.hypothesis);
  json j = {{"rouge1", to_json(rouge1(ref, hyp))},
            {"rougeL", to_json(rougeL(ref, hyp))},
            {"bleu", to_json(bleu(ref, hyp))}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SynthArgs {
  std::string format;
  std::size_t n = 20;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  std::string content;
  if (parse_dataset_format(a.format) == DatasetFormat::csqa_jsonl) {
    for (const auto& r : make_synthetic_csqa(a.n, a.seed)) content += to_csqa_json(r).dump() + "\n";
  } else {
    json doc = {{"data", json::array()}};
    for (const auto& r : make_synthetic_docvqa(a.n, a.seed)) doc["data"].push_back(to_docvqa_json(r));
    content = doc.dump(2) + "\n";
  }
  write_output(a.out, content);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private prompt sanitization (DP-GTR)"};
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "Clip bounds [mu, mu+4sigma] from logit samples");
  c_cal->add_option("--samples", cal.samples, "File with one logit value per line")->required();
  c_cal->add_option("--out", cal.out, "Output JSON path (default stdout)");

  SanitizeArgs san;
  auto* c_san = app.add_subcommand("sanitize", "Run the three-stage pipeline on one prompt");
  c_san->add_option("--config", san.config, "Config JSON")->required();
  c_san->add_option("--prompt", san.prompt, "Prompt text, or @file")->required();
  c_san->add_option("--seed", san.seed, "Override pipeline.seed");
  c_san->add_option("--schedule", san.schedule, "Temperature sweep lo:hi:step (sets m)");
  c_san->add_option("--audit", san.audit, "Append the result to this JSONL file");
  c_san->add_flag("--report", san.report, "Print the privacy budget report to stderr");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Privacy/utility experiment over a QA dataset");
  c_ev->add_option("--dataset", ev.dataset, "Dataset file")->required();
  c_ev->add_option("--format", ev.format, "csqa_jsonl or docvqa_json")->required();
  c_ev->add_option("--config", ev.config, "Config JSON")->required();
  c_ev->add_option("--repeats", ev.repeats, "Repeats per (method, temperature), default 5");
  c_ev->add_option("--out", ev.out, "CSV report path (default stdout)");
  c_ev->add_option("--methods", ev.methods, "dp-gtr-ndp, dp-gtr-jem, dp-prompt")->delimiter(',');
  c_ev->add_option("--temperatures", ev.temperatures, "Comma-separated temperatures")->delimiter(',');
  c_ev->add_option("--schedule", ev.schedule, "Temperature sweep lo:hi:step for group rewriting");
  c_ev->add_option("--audit", ev.audit, "Append per-item rows to this JSONL file");
  c_ev->add_option("--sample", ev.sample, "Draw this many records");
  c_ev->add_option("--seed", ev.seed, "Experiment seed");

  KeywordsArgs kw;
  auto* c_kw = app.add_subcommand("keywords", "Consensus keyword histogram and top-K release");
  c_kw->add_option("--text", kw.texts, "A rewrite (repeatable, or @file)");
  c_kw->add_option("--file", kw.file, "File with one rewrite per line");
  c_kw->add_option("--k", kw.k, "K");
  c_kw->add_option("--method", kw.method, "ndp or dp");
  c_kw->add_option("--epsilon2", kw.epsilon2, "Budget for the dp release");
  c_kw->add_option("--seed", kw.seed, "Seed for the dp release");

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "rouge1, rougeL and BLEU between two texts");
  c_sc->add_option("--reference", sc.reference, "Reference text, or @file")->required();
  c_sc->add_option("--hypothesis", sc.hypothesis, "Hypothesis text, or @file")->required();

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Write a synthetic dataset the mock model can perturb");
  c_sy->add_option("--format", sy.format, "csqa_jsonl or docvqa_json")->required();
  c_sy->add_option("--n", sy.n, "Number of records");
  c_sy->add_option("--seed", sy.seed, "Seed");
  c_sy->add_option("--out", sy.out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_cal->parsed()) return cmd_calibrate(cal);
    if (c_san->parsed()) return cmd_sanitize(san);
    if (c_ev->parsed()) return cmd_evaluate(ev);
    if (c_kw->parsed()) return cmd_keywords(kw);
    if (c_sc->parsed()) return cmd_score(sc);
    if (c_sy->parsed()) return cmd_synth(sy);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
