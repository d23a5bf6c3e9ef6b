#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "dpgtr/eval_harness.hpp"
#include "dpgtr/text.hpp"
#include "dpgtr/text_metrics.hpp"

using namespace dpgtr;

namespace {

std::string csqa_line(const std::string& id, int n_choices, const std::string& key = "A") {
  nlohmann::json choices = nlohmann::json::array();
  for (int i = 0; i < n_choices; ++i) {
    choices.push_back({{"label", std::string(1, static_cast<char>('A' + i))},
                       {"text", "choice" + std::to_string(i)}});
  }
  nlohmann::json j = {{"id", id},
                      {"question", {{"stem", "Where is the thing " + id + "?"}, {"choices", choices}}},
                      {"answerKey", key}};
  return j.dump();
}

class GoldAnswerer : public LlmService {
 public:
  explicit GoldAnswerer(std::string reply) : reply_(std::move(reply)) {}
  ChatResponse complete(const ChatRequest&) override {
    ++calls;
    ChatResponse r;
    r.text = reply_;
    return r;
  }
  int calls = 0;

 private:
  std::string reply_;
};

QARecord csqa_record() {
  QARecord r;
  r.id = "q1";
  r.question = "Where would you keep a small dog at night?";
  r.choices = std::vector<Choice>{{"A", "kennel"}, {"B", "ocean"}, {"C", "oven"}, {"D", "sky"}, {"E", "car"}};
  r.gold = "A";
  return r;
}

PipelineServices mock_services(LlmService* client) {
  PipelineServices s;
  s.client = client;
  s.clock = [] { return std::string("2024-01-01T00:00:00Z"); };
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("csqa loader keeps good lines and reports malformed ones") {
  std::stringstream in(csqa_line("a", 5) + "\n{not json\n" + csqa_line("b", 5) + "\n");
  auto r = parse_dataset(in, DatasetFormat::csqa_jsonl);
  CHECK(r.records.size() == 2);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].position == 2);
  CHECK(r.malformed_fraction() == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(require_healthy(r), DatasetError);
  CHECK_NOTHROW(require_healthy(r, 0.5));
  CHECK(r.records[0].choices->size() == 5);
  CHECK(r.records[0].gold == "A");
}

TEST_CASE("csqa with four choices or a foreign key is rejected") {
  std::stringstream in(csqa_line("a", 4) + "\n" + csqa_line("b", 5, "Z") + "\n");
  auto r = parse_dataset(in, DatasetFormat::csqa_jsonl);
  CHECK(r.records.empty());
  CHECK(r.errors.size() == 2);
}

TEST_CASE("docvqa loader") {
  std::stringstream in(R"({"data":[
    {"questionId": 1, "question": "What is the total?", "answers": ["42"], "ocr_tokens": ["Total", "42"]},
    {"questionId": 2, "question": "Missing context", "answers": ["x"]}
  ]})");
  auto r = parse_dataset(in, DatasetFormat::docvqa_json);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].id == "1");
  CHECK(r.records[0].gold == "42");
  CHECK(r.records[0].context->size() == 2);
  CHECK(r.errors.size() == 1);
  std::stringstream bad("[");
  CHECK_THROWS_AS(parse_dataset(bad, DatasetFormat::docvqa_json), DatasetError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.json", DatasetFormat::docvqa_json), DatasetError);
  CHECK_THROWS_AS(parse_dataset_format("csv"), ConfigError);
}

TEST_CASE("sampling is seeded and without replacement") {
  auto recs = make_synthetic_csqa(500, 1);
  auto a = sample_records(recs, {200, 7});
  auto b = sample_records(recs, {200, 7});
  auto c = sample_records(recs, {200, 8});
  REQUIRE(a.size() == 200);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    ids.insert(a[i].id);
  }
  CHECK(ids.size() == 200);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].id != c[i].id;
  CHECK(differs);
  CHECK(sample_records(recs, {1000, 7}).size() == 500);
}

TEST_CASE("synthetic fixtures round-trip through the loaders") {
  auto recs = make_synthetic_csqa(20, 3);
  std::stringstream lines;
  for (const auto& r : recs) lines << to_csqa_json(r).dump() << "\n";
  auto loaded = parse_dataset(lines, DatasetFormat::csqa_jsonl);
  CHECK(loaded.errors.empty());
  REQUIRE(loaded.records.size() == 20);
  CHECK(loaded.records[5].question == recs[5].question);

  auto vqa = make_synthetic_docvqa(10, 3);
  nlohmann::json doc = {{"data", nlohmann::json::array()}};
  for (const auto& r : vqa) doc["data"].push_back(to_docvqa_json(r));
  std::stringstream in(doc.dump());
  auto lv = parse_dataset(in, DatasetFormat::docvqa_json);
  CHECK(lv.errors.empty());
  CHECK(lv.records.size() == 10);
}

TEST_CASE("choice label parsing") {
  std::vector<Choice> ch = {{"A", "x"}, {"B", "y"}, {"C", "z"}, {"D", "w"}, {"E", "v"}};
  CHECK(parse_choice_label("B", ch) == "B");
  CHECK(parse_choice_label("b.", ch) == "B");
  CHECK(parse_choice_label("(B)", ch) == "B");
  CHECK(parse_choice_label("Answer: B", ch) == "B");
  CHECK_FALSE(parse_choice_label("I am not sure", ch).has_value());
}

TEST_CASE("evaluate_item corners") {
  auto rec = csqa_record();
  GoldAnswerer gold("A");
  Sanitizer identity = [](const std::string& q, std::uint64_t) { return SanitizerOutput{q, 0.0}; };
  auto top = evaluate_item(rec, identity, gold, {});
  CHECK(top.q_rouge1 == 1.0);
  CHECK(top.q_rougeL == 1.0);
  CHECK(top.q_bleu == 1.0);
  CHECK(top.utility == 1.0);

  GoldAnswerer wrong("C");
  Sanitizer unrelated = [](const std::string&, std::uint64_t) {
    return SanitizerOutput{"purple elephants sing loudly tonight", 0.0};
  };
  auto bottom = evaluate_item(rec, unrelated, wrong, {});
  CHECK(bottom.q_rouge1 == 0.0);
  CHECK(bottom.q_bleu < 0.1);
  CHECK(bottom.utility == 0.0);
}

TEST_CASE("evaluate_item re-asks once on unparseable answers and marks failures") {
  auto rec = csqa_record();
  GoldAnswerer rambling("I would rather not say");
  Sanitizer identity = [](const std::string& q, std::uint64_t) { return SanitizerOutput{q, 0.0}; };
  auto row = evaluate_item(rec, identity, rambling, {});
  CHECK(rambling.calls == 2);
  CHECK(row.utility == 0.0);
  CHECK_FALSE(row.failed);

  class Down : public LlmService {
   public:
    ChatResponse complete(const ChatRequest&) override { throw LlmError("down", 503, 3, true); }
  } down;
  auto failed = evaluate_item(rec, identity, down, {});
  CHECK(failed.failed);
  auto agg = aggregate({failed, row});
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].n == 1);
  CHECK(agg[0].failed == 1);
}

TEST_CASE("docvqa utility is rouge1 against the gold answer") {
  QARecord r;
  r.id = "d";
  r.dataset = DatasetKind::docvqa;
  r.question = "What is the invoice total?";
  r.context = std::vector<std::string>{"Invoice", "total", "42", "dollars"};
  r.gold = "42 dollars";
  GoldAnswerer a("42");
  Sanitizer identity = [](const std::string& q, std::uint64_t) { return SanitizerOutput{q, 0.0}; };
  auto row = evaluate_item(r, identity, a, {});
  CHECK(row.utility == doctest::Approx(rouge1("42 dollars", "42").value));
}

TEST_CASE("aggregate statistics") {
  EvalRow a, b;
  a.method = b.method = "m";
  a.temperature = b.temperature = 1.0;
  a.q_rouge1 = 0.0;
  b.q_rouge1 = 1.0;
  b.repeat_index = 1;
  auto agg = aggregate({a, b});
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].q_rouge1.mean == 0.5);
  CHECK(agg[0].q_rouge1.std == 0.5);

  std::vector<EvalRow> same(5, a);
  for (int i = 0; i < 5; ++i) same[i].repeat_index = i;
  CHECK(aggregate(same)[0].q_rouge1.std == 0.0);

  // item spread inside one repeat is not repeat spread
  EvalRow c = b;
  c.repeat_index = 0;
  auto single = aggregate({a, c, a, c});
  CHECK(single[0].q_rouge1.mean == 0.5);
  CHECK(single[0].q_rouge1.std == 0.0);
  CHECK(single[0].n == 4);

  Rng rng(3);
  std::vector<EvalRow> rows;
  for (int i = 0; i < 60; ++i) {
    EvalRow r;
    r.method = i % 2 ? "x" : "y";
    r.temperature = 0.5 * static_cast<double>(i % 3);
    r.repeat_index = i % 5;
    r.q_rouge1 = rng.uniform();
    r.utility = rng.uniform();
    rows.push_back(r);
  }
  auto base = render_report_csv(aggregate(rows));
  for (int t = 0; t < 10; ++t) {
    shuffle(rows, rng);
    CHECK(render_report_csv(aggregate(rows)) == base);
  }
}

TEST_CASE("report csv layout and parse-back") {
  CHECK(render_report_csv({}) == join(report_columns(), ",") + "\n");

  EvalRow a;
  a.method = "m";
  a.temperature = 0.15;
  a.q_rouge1 = 0.1;
  a.q_bleu = 1.0 / 3.0;
  a.utility = 1.0;
  a.ledger_total = 3880.0;
  auto agg = aggregate({a});
  auto csv = render_report_csv(agg);
  auto lines = split(csv, '\n');
  REQUIRE(lines.size() == 2);
  auto header = split(lines[0], ',');
  auto cells = split(lines[1], ',');
  REQUIRE(cells.size() == header.size());
  std::map<std::string, std::string> row;
  for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
  CHECK(row["method"] == "m");
  CHECK(std::strtod(row["temperature"].c_str(), nullptr) == agg[0].temperature);
  CHECK(std::strtod(row["q_rouge1_mean"].c_str(), nullptr) == agg[0].q_rouge1.mean);
  CHECK(std::strtod(row["q_bleu_mean"].c_str(), nullptr) == agg[0].q_bleu.mean);
  CHECK(std::strtod(row["ledger_total_mean"].c_str(), nullptr) == agg[0].ledger_total.mean);

  auto path = std::filesystem::temp_directory_path() / "dpgtr_report_test.csv";
  emit_report(agg, path.string());
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == csv);
  std::filesystem::remove(path);
}

TEST_CASE("experiment rows equal a straight-line recomputation") {
  MockLlm mock;
  auto services = mock_services(&mock);
  auto recs = make_synthetic_csqa(20, 5);
  ExperimentSpec spec;
  spec.methods = {kMethodDpGtrNdp, kMethodDpPrompt};
  spec.temperatures = {0.5, 1.0};
  spec.repeats = 2;
  spec.seed = 11;
  spec.parallelism = 3;
  PipelineConfig base;
  auto rows = run_experiment(recs, spec, base, services, mock);
  REQUIRE(rows.size() == 2 * 2 * 2 * 20);

  std::size_t idx = 0;
  for (const auto& method : spec.methods) {
    for (double t : spec.temperatures) {
      for (int rep = 0; rep < spec.repeats; ++rep) {
        for (std::size_t i = 0; i < recs.size(); ++i, ++idx) {
          std::uint64_t seed = Rng::derive_seed(Rng::derive_seed(spec.seed, i), rep);
          PipelineConfig c = base;
          c.temperature = t;
          c.seed = seed;
          std::string sanitized;
          double total;
          if (method == kMethodDpPrompt) {
            c.m = 1;
            PrivacyLedger ledger;
            sanitized = default_rewriter(services)(recs[i].question, c, ledger).rewrites[0].text;
            total = ledger.total();
          } else {
            auto r = run_dp_gtr(recs[i].question, c, services);
            sanitized = r.sanitized;
            total = r.ledger.total();
          }
          const auto& row = rows[idx];
          CHECK(row.method == method);
          CHECK(row.temperature == t);
          CHECK(row.repeat_index == rep);
          CHECK(row.id == recs[i].id);
          CHECK(row.sanitized == sanitized);
          CHECK(row.ledger_total == total);
          CHECK(row.q_rouge1 == rouge1(recs[i].question, sanitized).value);
          CHECK(row.q_bleu == bleu(recs[i].question, sanitized).value);
        }
      }
    }
  }
}

TEST_CASE("jem method requires epsilon2 and unknown methods are rejected") {
  MockLlm mock;
  PipelineConfig base;
  CHECK_THROWS_AS(make_method_sanitizer(kMethodDpGtrJem, 1.0, base, mock_services(&mock)), ConfigError);
  base.epsilon2 = 1.0;
  CHECK_NOTHROW(make_method_sanitizer(kMethodDpGtrJem, 1.0, base, mock_services(&mock)));
  CHECK_THROWS_AS(make_method_sanitizer("nope", 1.0, base, mock_services(&mock)), ConfigError);
}
