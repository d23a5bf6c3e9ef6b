#include "dpgtr/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dpgtr/parallel.hpp"
#include "dpgtr/random.hpp"
#include "dpgtr/text.hpp"
#include "dpgtr/text_metrics.hpp"

namespace dpgtr {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

QARecord parse_csqa_object(const nlohmann::json& j) {
  QARecord r;
  r.dataset = DatasetKind::csqa;
  r.id = j.at("id").get<std::string>();
  const auto& q = j.at("question");
  r.question = q.at("stem").get<std::string>();
  std::vector<Choice> choices;
  for (const auto& c : q.at("choices")) {
    choices.push_back({c.at("label").get<std::string>(), c.at("text").get<std::string>()});
  }
  r.choices = std::move(choices);
  r.gold = j.at("answerKey").get<std::string>();
  return r;
}

QARecord parse_docvqa_object(const nlohmann::json& j) {
  QARecord r;
  r.dataset = DatasetKind::docvqa;
  const auto& id = j.at("questionId");
  r.id = id.is_string() ? id.get<std::string>() : id.dump();
  r.question = j.at("question").get<std::string>();
  const auto& answers = j.at("answers");
  if (!answers.is_array() || answers.empty()) throw DomainError("record has no answers");
  r.gold = answers.at(0).get<std::string>();
  const char* key = j.contains("ocr_tokens") ? "ocr_tokens" : "context";
  if (j.contains(key)) r.context = j.at(key).get<std::vector<std::string>>();
  return r;
}

FieldStats stats_of(std::vector<double> values) {
  FieldStats s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::vector<double> sq;
  sq.reserve(values.size());
  for (double v : values) sq.push_back((v - s.mean) * (v - s.mean));
  std::sort(sq.begin(), sq.end());
  double ss = 0.0;
  for (double v : sq) ss += v;
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "csqa_jsonl") return DatasetFormat::csqa_jsonl;
  if (name == "docvqa_json") return DatasetFormat::docvqa_json;
  throw ConfigError(fmt::format("unknown dataset format '{}'", name));
}

void QARecord::validate() const {
  if (id.empty()) throw DomainError("record id is empty");
  if (question.empty()) throw DomainError("question is empty");
  if (dataset == DatasetKind::csqa) {
    if (!choices || choices->size() != 5) {
      throw DomainError(fmt::format("CSQA record {} must have exactly 5 choices", id));
    }
    bool found = std::any_of(choices->begin(), choices->end(),
                             [&](const Choice& c) { return c.label == gold; });
    if (!found) throw DomainError(fmt::format("CSQA record {}: gold '{}' is not a label", id, gold));
  } else {
    if (!context) throw DomainError(fmt::format("DocVQA record {} has no OCR context", id));
  }
}

double LoadResult::malformed_fraction() const {
  const std::size_t total = records.size() + errors.size();
  return total == 0 ? 0.0 : static_cast<double>(errors.size()) / static_cast<double>(total);
}

std::vector<QARecord> sample_records(const std::vector<QARecord>& records, const SampleSpec& spec) {
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(spec.seed);
  const std::size_t n = std::min(spec.n, records.size());
  // Partial Fisher-Yates: the first n slots become the sample.
  for (std::size_t i = 0; i < n; ++i) {
    auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<QARecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(records[idx[i]]);
  return out;
}

LoadResult parse_dataset(std::istream& in, DatasetFormat format, std::optional<SampleSpec> sample) {
  LoadResult result;
  if (format == DatasetFormat::csqa_jsonl) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        QARecord r = parse_csqa_object(nlohmann::json::parse(line));
        r.validate();
        result.records.push_back(std::move(r));
      } catch (const std::exception& e) {
        result.errors.push_back({lineno, e.what()});
      }
    }
  } else {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError(fmt::format("DocVQA file is not valid JSON: {}", e.what()));
    }
    const nlohmann::json& items = doc.is_array() ? doc : doc.value("data", nlohmann::json());
    if (!items.is_array()) throw DatasetError("DocVQA file has no 'data' array");
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        QARecord r = parse_docvqa_object(items[i]);
        r.validate();
        result.records.push_back(std::move(r));
      } catch (const std::exception& e) {
        result.errors.push_back({i, e.what()});
      }
    }
  }
  if (sample) result.records = sample_records(result.records, *sample);
  return result;
}

LoadResult load_dataset(const std::string& path, DatasetFormat format,
                        std::optional<SampleSpec> sample) {
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("cannot open dataset '{}'", path));
  return parse_dataset(in, format, sample);
}

void require_healthy(const LoadResult& result, double max_fraction) {
  if (result.malformed_fraction() > max_fraction) {
    std::string first = result.errors.empty() ? "" : result.errors.front().message;
    throw DatasetError(fmt::format("{} of {} records malformed (limit {:.0f}%); first: {}",
                                   result.errors.size(),
                                   result.errors.size() + result.records.size(),
                                   max_fraction * 100.0, first));
  }
}

std::string csqa_answer_prompt(const std::string& question, const std::vector<Choice>& choices) {
  std::string out =
      "Answer the multiple-choice question with the letter of the correct choice only.\n";
  out += "Question: " + question + "\n";
  for (const auto& c : choices) out += c.label + ". " + c.text + "\n";
  out += "Answer:";
  return out;
}

std::string docvqa_answer_prompt(const std::string& question, const std::vector<std::string>& ocr) {
  std::string out = "Answer the question using only the document text.\n";
  out += "Document: " + join(ocr, " ") + "\n";
  out += "Question: " + question + "\n";
  out += "Answer:";
  return out;
}

std::optional<std::string> parse_choice_label(const std::string& response,
                                              const std::vector<Choice>& choices) {
  std::string s = trim(response);
  if (upper(s.substr(0, 7)) == "ANSWER:") s = trim(s.substr(7));
  auto words = split_whitespace(s);
  if (words.empty()) return std::nullopt;
  std::string label = upper(normalize_word(words.front()));
  for (const auto& c : choices) {
    if (upper(c.label) == label) return c.label;
  }
  return std::nullopt;
}

nlohmann::json to_json(const EvalRow& row) {
  nlohmann::json j = {{"id", row.id},
                      {"method", row.method},
                      {"temperature", row.temperature},
                      {"repeat", row.repeat_index},
                      {"failed", row.failed}};
  if (row.failed) {
    j["error"] = row.error;
  } else {
    j["privacy"] = {{"rouge1", row.q_rouge1}, {"rougeL", row.q_rougeL}, {"bleu", row.q_bleu}};
    j["utility"] = row.utility;
    j["ledger_total"] = row.ledger_total;
    j["sanitized"] = row.sanitized;
    j["answer"] = row.answer;
  }
  return j;
}

EvalRow evaluate_item(const QARecord& record, const Sanitizer& sanitizer, LlmService& answerer,
                      const EvalItemContext& ctx) {
  EvalRow row;
  row.id = record.id;
  row.method = ctx.method;
  row.temperature = ctx.temperature;
  row.repeat_index = ctx.repeat_index;

  SanitizerOutput sanitized;
  try {
    sanitized = sanitizer(record.question, ctx.seed);
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = fmt::format("sanitizer: {}", e.what());
    return row;
  }
  row.sanitized = sanitized.text;
  row.ledger_total = sanitized.ledger_total;

  // Privacy and utility both use this single sanitized question.
  const auto ref = metric_tokens(record.question);
  const auto hyp = metric_tokens(sanitized.text);
  row.q_rouge1 = rouge1(ref, hyp).value;
  row.q_rougeL = rougeL(ref, hyp).value;
  row.q_bleu = bleu(ref, hyp).value;

  ChatRequest req;
  req.model = ctx.answer_model;
  req.temperature = 0.0;
  req.max_tokens = 32;
  req.seed = ctx.seed;
  try {
    if (record.dataset == DatasetKind::csqa) {
      req.messages.push_back({ChatRole::user, csqa_answer_prompt(sanitized.text, *record.choices)});
      ChatResponse resp = answerer.complete(req);
      auto label = parse_choice_label(resp.text, *record.choices);
      if (!label) {
        // One bounded re-ask.
        req.messages.insert(req.messages.begin(),
                            {ChatRole::system, "Reply with a single choice letter."});
        resp = answerer.complete(req);
        label = parse_choice_label(resp.text, *record.choices);
      }
      row.answer = resp.text;
      row.utility = (label && upper(*label) == upper(record.gold)) ? 1.0 : 0.0;
    } else {
      req.messages.push_back({ChatRole::user, docvqa_answer_prompt(sanitized.text, *record.context)});
      ChatResponse resp = answerer.complete(req);
      row.answer = resp.text;
      row.utility = rouge1(record.gold, resp.text).value;
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = fmt::format("answerer: {}", e.what());
  }
  return row;
}

std::vector<AggregateRow> aggregate(const std::vector<EvalRow>& rows) {
  struct Acc {
    std::vector<double> r1, rl, bl, ut, lt;
  };
  struct Group {
    std::size_t n = 0;
    std::size_t failed = 0;
    std::map<int, Acc> repeats;
  };
  std::map<std::pair<std::string, double>, Group> groups;
  for (const auto& r : rows) {
    Group& g = groups[{r.method, r.temperature}];
    if (r.failed) {
      ++g.failed;
      continue;
    }
    ++g.n;
    Acc& a = g.repeats[r.repeat_index];
    a.r1.push_back(r.q_rouge1);
    a.rl.push_back(r.q_rougeL);
    a.bl.push_back(r.q_bleu);
    a.ut.push_back(r.utility);
    a.lt.push_back(r.ledger_total);
  }
  std::vector<AggregateRow> out;
  for (auto& [key, g] : groups) {
    // item mean within each repeat, then statistics across repeats
    Acc per_repeat;
    for (auto& [_, a] : g.repeats) {
      per_repeat.r1.push_back(stats_of(std::move(a.r1)).mean);
      per_repeat.rl.push_back(stats_of(std::move(a.rl)).mean);
      per_repeat.bl.push_back(stats_of(std::move(a.bl)).mean);
      per_repeat.ut.push_back(stats_of(std::move(a.ut)).mean);
      per_repeat.lt.push_back(stats_of(std::move(a.lt)).mean);
    }
    AggregateRow row;
    row.method = key.first;
    row.temperature = key.second;
    row.n = g.n;
    row.failed = g.failed;
    row.q_rouge1 = stats_of(std::move(per_repeat.r1));
    row.q_rougeL = stats_of(std::move(per_repeat.rl));
    row.q_bleu = stats_of(std::move(per_repeat.bl));
    row.utility = stats_of(std::move(per_repeat.ut));
    row.ledger_total = stats_of(std::move(per_repeat.lt));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::string> report_columns() {
  return {"method",       "temperature",  "q_rouge1_mean", "q_rouge1_std",
          "q_rougeL_mean", "q_rougeL_std", "q_bleu_mean",   "q_bleu_std",
          "utility_mean", "utility_std",  "ledger_total_mean", "n",
          "failed"};
}

std::string render_report_csv(const std::vector<AggregateRow>& aggregates) {
  std::string out = join(report_columns(), ",") + "\n";
  for (const auto& a : aggregates) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(a.method),
                       a.temperature, a.q_rouge1.mean, a.q_rouge1.std, a.q_rougeL.mean,
                       a.q_rougeL.std, a.q_bleu.mean, a.q_bleu.std, a.utility.mean, a.utility.std,
                       a.ledger_total.mean, a.n, a.failed);
  }
  return out;
}

void emit_report(const std::vector<AggregateRow>& aggregates, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open report '{}' for writing", path));
  out << render_report_csv(aggregates);
  out.flush();
  if (!out) throw Error(fmt::format("failed writing report '{}'", path));
}

Sanitizer make_method_sanitizer(const std::string& method, double temperature,
                                const PipelineConfig& base, const PipelineServices& services) {
  PipelineConfig config = base;
  config.temperature = temperature;
  if (method == kMethodDpGtrNdp || method == kMethodDpGtrJem) {
    config.release_method = method == kMethodDpGtrNdp ? ReleaseMethod::NDP : ReleaseMethod::DP;
    config.validate();
    return [config, services](const std::string& question, std::uint64_t seed) {
      PipelineConfig c = config;
      c.seed = seed;
      SanitizedResult r = run_dp_gtr(question, c, services);
      return SanitizerOutput{r.sanitized, r.ledger.total()};
    };
  }
  if (method == kMethodDpPrompt) {
    config.m = 1;
    config.schedule.reset();
    config.release_method = ReleaseMethod::NDP;
    config.validate();
    GroupRewriter rewriter = default_rewriter(services);
    return [config, rewriter](const std::string& question, std::uint64_t seed) {
      PipelineConfig c = config;
      c.seed = seed;
      PrivacyLedger ledger;
      ParaphraseGroup g = rewriter(question, c, ledger);
      return SanitizerOutput{g.rewrites.front().text, ledger.total()};
    };
  }
  throw ConfigError(fmt::format("unknown method '{}'", method));
}

std::vector<EvalRow> run_experiment(const std::vector<QARecord>& records,
                                    const ExperimentSpec& spec, const PipelineConfig& base,
                                    const PipelineServices& services, LlmService& answerer) {
  if (spec.repeats < 1) throw ConfigError("repeats must be at least 1");
  struct Cell {
    std::size_t method;
    std::size_t temp;
    int repeat;
  };
  std::vector<Cell> cells;
  std::vector<Sanitizer> sanitizers;
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (std::size_t ti = 0; ti < spec.temperatures.size(); ++ti) {
      sanitizers.push_back(
          make_method_sanitizer(spec.methods[mi], spec.temperatures[ti], base, services));
      for (int r = 0; r < spec.repeats; ++r) cells.push_back({mi, ti, r});
    }
  }
  const std::size_t n_items = records.size();
  std::vector<EvalRow> rows(cells.size() * n_items);
  parallel_for(rows.size(), spec.parallelism, [&](std::size_t task) {
    const Cell& cell = cells[task / n_items];
    const std::size_t item = task % n_items;
    EvalItemContext ctx;
    ctx.method = spec.methods[cell.method];
    ctx.temperature = spec.temperatures[cell.temp];
    ctx.repeat_index = cell.repeat;
    // Same seed for an (item, repeat) pair across methods and temperatures.
    ctx.seed = Rng::derive_seed(Rng::derive_seed(spec.seed, item),
                                static_cast<std::uint64_t>(cell.repeat));
    ctx.answer_model = spec.answer_model;
    rows[task] = evaluate_item(records[item],
                               sanitizers[cell.method * spec.temperatures.size() + cell.temp],
                               answerer, ctx);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

namespace {

const std::vector<std::string> kNouns = {
    "person", "child",  "house",  "city",     "store",  "car",    "road",   "school",
    "teacher", "doctor", "hospital", "money", "bank",   "book",   "room",   "kitchen",
    "garden", "dog",    "cat",    "bird",     "fish",   "tree",   "forest", "river",
    "ocean",  "mountain", "friend", "family", "office", "hotel",  "table",  "chair",
    "bed",    "door",   "window", "airport",  "train",  "bus",    "food",   "water"};
const std::vector<std::string> kVerbs = {"buy", "get",  "find", "keep", "put",  "use",  "want",
                                         "need", "see", "eat",  "read", "clean", "build"};
const std::vector<std::string> kAdjectives = {"big", "small", "old",   "new",  "happy",
                                              "good", "quick", "cold", "hot", "young"};

const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::vector<std::string> distinct_nouns(std::size_t n, Rng& rng) {
  std::vector<std::string> pool = kNouns;
  shuffle(pool, rng);
  pool.resize(n);
  return pool;
}

}  // namespace

std::vector<QARecord> make_synthetic_csqa(std::size_t n, std::uint64_t seed) {
  std::vector<QARecord> out;
  Rng rng(seed);
  static const std::vector<std::string> kLabels = {"A", "B", "C", "D", "E"};
  for (std::size_t i = 0; i < n; ++i) {
    auto nouns = distinct_nouns(8, rng);
    QARecord r;
    r.dataset = DatasetKind::csqa;
    r.id = fmt::format("syn-csqa-{:04}", i);
    r.question = fmt::format("Where would a {} {} usually {} a {} near the {}?", pick(kAdjectives, rng),
                             nouns[0], pick(kVerbs, rng), nouns[1], nouns[2]);
    std::vector<std::string> texts = {nouns[2] + " " + nouns[3], nouns[4] + " " + nouns[5],
                                      nouns[6], nouns[7], nouns[4] + " " + nouns[6]};
    std::vector<std::size_t> order = {0, 1, 2, 3, 4};
    shuffle(order, rng);
    std::vector<Choice> choices;
    for (std::size_t k = 0; k < 5; ++k) {
      choices.push_back({kLabels[k], texts[order[k]]});
      if (order[k] == 0) r.gold = kLabels[k];
    }
    r.choices = std::move(choices);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<QARecord> make_synthetic_docvqa(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::vector<std::string>> kFields = {
      {"invoice", "number"}, {"total", "amount"}, {"date"},
      {"company", "name"},   {"phone"},           {"address"}};
  std::vector<QARecord> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> fields = {0, 1, 2, 3, 4, 5};
    shuffle(fields, rng);
    fields.resize(3);
    std::vector<std::string> ocr;
    std::vector<std::string> values;
    for (auto f : fields) {
      ocr.insert(ocr.end(), kFields[f].begin(), kFields[f].end());
      values.push_back(fmt::format("{}", 1000 + rng.below(9000)));
      ocr.push_back(values.back());
    }
    const std::size_t asked = static_cast<std::size_t>(rng.below(3));
    QARecord r;
    r.dataset = DatasetKind::docvqa;
    r.id = fmt::format("syn-docvqa-{:04}", i);
    r.question = fmt::format("What is the {} on this {}?", join(kFields[fields[asked]], " "),
                             pick(kNouns, rng));
    r.gold = values[asked];
    r.context = std::move(ocr);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_csqa_json(const QARecord& record) {
  nlohmann::json choices = nlohmann::json::array();
  for (const auto& c : record.choices.value_or(std::vector<Choice>{})) {
    choices.push_back({{"label", c.label}, {"text", c.text}});
  }
  return {{"id", record.id},
          {"question", {{"stem", record.question}, {"choices", std::move(choices)}}},
          {"answerKey", record.gold}};
}

nlohmann::json to_docvqa_json(const QARecord& record) {
  return {{"questionId", record.id},
          {"question", record.question},
          {"answers", {record.gold}},
          {"ocr_tokens", record.context.value_or(std::vector<std::string>{})}};
}

}  // namespace dpgtr
