#include <cmath>

#include "doctest.h"
#include "dpgtr/exemplar_selection.hpp"

using namespace dpgtr;

namespace {

ParaphraseGroup group_of(const std::vector<std::string>& texts) {
  ParaphraseGroup g;
  for (const auto& t : texts) g.rewrites.push_back(Rewrite{t, {}, 1, 1.0, 0});
  return g;
}

class TableScorer : public PerplexityScorer {
 public:
  TableScorer(std::map<std::string, double> table, std::function<double(double)> f)
      : table_(std::move(table)), f_(std::move(f)) {}
  double score(const std::string& text) const override {
    auto it = table_.find(text);
    if (it == table_.end()) throw ScoringError("unknown");
    return f_(it->second);
  }

 private:
  std::map<std::string, double> table_;
  std::function<double(double)> f_;
};

}  // namespace

TEST_CASE("unigram perplexity closed forms") {
  UnigramPerplexityScorer s({"a b"});
  // Each token: (1+1)/(2+2) = 1/2.
  CHECK(s.score("a b") == doctest::Approx(2.0).epsilon(1e-14));
  UnigramPerplexityScorer one({"a a a"});
  CHECK(one.score("a") == doctest::Approx(1.0).epsilon(1e-14));
  // Unseen token extends the vocabulary: V=3, denominators 2+3.
  CHECK(s.score("c") == doctest::Approx(5.0).epsilon(1e-14));
  CHECK_THROWS_AS(s.score("..."), ScoringError);
}

TEST_CASE("logprob perplexity") {
  LogprobPerplexityScorer s([](const std::string&) { return std::vector<double>{std::log(0.5), std::log(0.5)}; });
  CHECK(s.score("x y") == doctest::Approx(2.0));
  LogprobPerplexityScorer bad([](const std::string&) -> std::vector<double> { throw std::runtime_error("down"); });
  CHECK_THROWS_AS(bad.score("x"), ScoringError);
}

TEST_CASE("select_exemplar picks the argmin and keeps the earliest tie") {
  auto g = group_of({"p", "q", "r", "s"});
  TableScorer s({{"p", 3.0}, {"q", 1.0}, {"r", 1.0}, {"s", 2.0}}, [](double x) { return x; });
  PrivacyLedger ledger;
  auto best = select_exemplar(g, s, ledger);
  CHECK(best.index == 1);
  CHECK(best.text == "q");
  CHECK(ledger.total() == 0.0);
  CHECK(ledger.entries().size() == 1);
}

TEST_CASE("select_exemplar skips unscorable rewrites and fails when none score") {
  auto g = group_of({"zz", "q"});
  TableScorer s({{"q", 4.0}}, [](double x) { return x; });
  PrivacyLedger ledger;
  CHECK(select_exemplar(g, s, ledger).index == 1);
  auto none = group_of({"zz"});
  CHECK_THROWS_AS(select_exemplar(none, s, ledger), ScoringError);
  TableScorer negative({{"zz", 1.0}}, [](double) { return -1.0; });
  CHECK_THROWS_AS(select_exemplar(none, negative, ledger), ScoringError);
}

TEST_CASE("select_exemplar is invariant to monotone transforms") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> texts;
    std::map<std::string, double> table;
    std::size_t m = 1 + rng.below(12);
    for (std::size_t i = 0; i < m; ++i) {
      texts.push_back("t" + std::to_string(i));
      table[texts.back()] = 1.0 + static_cast<double>(rng.below(5));
    }
    auto g = group_of(texts);
    PrivacyLedger l;
    auto base = select_exemplar(g, TableScorer(table, [](double x) { return x; }), l).index;
    CHECK(select_exemplar(g, TableScorer(table, [](double x) { return x * x; }), l).index == base);
    CHECK(select_exemplar(g, TableScorer(table, [](double x) { return 10 * x; }), l).index == base);
    CHECK(select_exemplar(g, TableScorer(table, [](double x) { return x + 3; }), l).index == base);
  }
}

TEST_CASE("group-fit scorer prefers the consensus rewrite") {
  auto g = group_of({"buy house city", "buy house city", "purchase home town now"});
  auto s = UnigramPerplexityScorer::fit(g);
  PrivacyLedger ledger;
  CHECK(select_exemplar(g, s, ledger).index == 0);
}

TEST_CASE("selection equals a brute-force rescoring argmin on a mock group") {
  MockLlm mock;
  BlackboxEngine engine;
  engine.client = &mock;
  GroupOptions opts;
  opts.base.prompt_template = "Paraphrase:\n{prompt}";
  PrivacyLedger ledger;
  auto g = rewrite_group("Where can I buy a cheap house near the old river", RewriteSchedule::uniform(1.0, 10),
                         engine, 5, ledger, opts);
  auto scorer = UnigramPerplexityScorer::fit(g);
  std::size_t best = 0;
  for (std::size_t i = 1; i < g.rewrites.size(); ++i) {
    if (scorer.score(g.rewrites[i].text) < scorer.score(g.rewrites[best].text)) best = i;
  }
  CHECK(select_exemplar(g, scorer, ledger).index == best);
}
