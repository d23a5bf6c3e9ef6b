#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "dpgtr/consensus_keywords.hpp"
#include "dpgtr/error.hpp"
#include "oracles.hpp"

using namespace dpgtr;

namespace {

KeywordHistogram hist_of(std::map<std::string, std::uint64_t> counts) {
  KeywordHistogram h;
  for (const auto& [w, c] : counts) h.add(w, c);
  return h;
}

}  // namespace

TEST_CASE("tokenize_normalize drops stop words and punctuation") {
  CHECK(tokenize_normalize("The cat, the CAT!") == std::vector<std::string>{"cat", "cat"});
  CHECK(tokenize_normalize("!!! ...").empty());
}

TEST_CASE("build_histogram counts every occurrence") {
  auto h = build_histogram(std::vector<std::string>{"The cat sat.", "A cat ran", "dog"});
  CHECK(h.counts.at("cat") == 2);
  CHECK(h.counts.at("sat") == 1);
  CHECK(h.counts.at("dog") == 1);
  CHECK_FALSE(h.counts.contains("the"));
  CHECK(h.total_words == 5);
  CHECK(h.normalization.stop_word_list == "en-v1");

  ParaphraseGroup g;
  g.source = "secret secret secret";
  g.rewrites.push_back(Rewrite{"cat", {}, 1, 1.0, 0});
  CHECK_FALSE(build_histogram(g).counts.contains("secret"));
}

TEST_CASE("topk_ndp ordering and ties") {
  PrivacyLedger ledger;
  auto r = topk_ndp(hist_of({{"b", 3}, {"a", 3}, {"c", 5}, {"d", 1}}), 3, ledger);
  CHECK(r.words == std::vector<std::string>{"c", "a", "b"});
  CHECK(r.method == ReleaseMethod::NDP);
  CHECK(std::isinf(r.epsilon));
  CHECK(ledger.total() == 0.0);
  CHECK(ledger.entries().size() == 1);

  auto few = topk_ndp(hist_of({{"x", 1}}), 4, ledger);
  CHECK(few.words == std::vector<std::string>{"x"});
  CHECK(few.warnings.size() == 1);
  auto none = topk_ndp(KeywordHistogram{}, 4, ledger);
  CHECK(none.words.empty());
  CHECK(none.warnings.size() == 1);
  CHECK_THROWS_AS(topk_ndp(hist_of({{"x", 1}}), 0, ledger), DomainError);
}

TEST_CASE("topk_ndp matches a full-sort oracle on random histograms") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::string, std::uint64_t> counts;
    std::size_t n = 1 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) counts["w" + std::to_string(rng.below(50))] = 1 + rng.below(6);
    PrivacyLedger ledger;
    std::size_t k = 1 + rng.below(12);
    CHECK(topk_ndp(hist_of(counts), k, ledger).words == oracle::topk_by_sort(counts, k));
  }
}

TEST_CASE("topk_dp single draw frequencies") {
  // counts a=2, b=1, K=1, eps=2: P(a) = e^2 / (e^2 + e).
  auto h = hist_of({{"a", 2}, {"b", 1}});
  const double expected = std::exp(2.0) / (std::exp(2.0) + std::exp(1.0));
  Rng rng(12);
  int hits = 0;
  const int runs = 200000;
  for (int i = 0; i < runs; ++i) {
    PrivacyLedger ledger;
    hits += topk_dp(h, 1, 2.0, TopKStrategy::peel, rng, ledger).words[0] == "a";
  }
  CHECK(std::abs(hits / double(runs) - expected) < 0.005);
}

TEST_CASE("topk_dp peel matches exact enumeration") {
  std::map<std::string, int> counts = {{"a", 4}, {"b", 1}, {"c", 2}};
  std::map<std::string, std::uint64_t> ucounts(counts.begin(), counts.end());
  auto h = hist_of(ucounts);
  for (double eps : {0.5, 2.0}) {
    std::map<std::vector<std::string>, int> freq;
    Rng rng(99);
    const int runs = 100000;
    for (int i = 0; i < runs; ++i) {
      PrivacyLedger ledger;
      ++freq[topk_dp(h, 2, eps, TopKStrategy::peel, rng, ledger).words];
    }
    std::vector<double> emp, exact;
    for (const auto& seq : oracle::ordered_sequences({"a", "b", "c"}, 2)) {
      emp.push_back(freq[seq] / double(runs));
      exact.push_back(oracle::peel_sequence_probability(counts, seq, eps));
    }
    CHECK(oracle::total_variation(emp, exact) < 0.01);
  }
}

TEST_CASE("topk_dp output ratio on neighbouring histograms is bounded by e^eps") {
  std::map<std::string, int> c1 = {{"a", 3}, {"b", 2}, {"c", 0}};
  std::map<std::string, int> c2 = {{"a", 2}, {"b", 3}, {"c", 1}};  // per-word counts differ by <= 1
  for (double eps : {0.5, 1.0, 2.0}) {
    for (const auto& seq : oracle::ordered_sequences({"a", "b", "c"}, 2)) {
      double p1 = oracle::peel_sequence_probability(c1, seq, eps);
      double p2 = oracle::peel_sequence_probability(c2, seq, eps);
      CHECK(p1 / p2 <= std::exp(eps) + 1e-12);
    }
  }
}

TEST_CASE("topk_dp accounting and errors") {
  auto h = hist_of({{"a", 2}, {"b", 1}, {"c", 1}});
  Rng rng(1);
  PrivacyLedger ledger;
  auto r = topk_dp(h, 3, 1.0, TopKStrategy::peel, rng, ledger);
  CHECK(r.words.size() == 3);
  std::set<std::string> distinct(r.words.begin(), r.words.end());
  CHECK(distinct.size() == 3);
  CHECK(ledger.total() == 1.0);
  CHECK(ledger.total(LedgerStage::keyword_release) == 1.0);

  CHECK_THROWS_AS(topk_dp(h, 4, 1.0, TopKStrategy::peel, rng, ledger), DomainError);
  CHECK_THROWS_AS(topk_dp(h, 0, 1.0, TopKStrategy::peel, rng, ledger), DomainError);
  CHECK_THROWS_AS(topk_dp(h, 1, 0.0, TopKStrategy::peel, rng, ledger), DomainError);
  CHECK_THROWS_AS(topk_dp(h, 1, 1.0, TopKStrategy::joint, rng, ledger), NotAvailableError);
  CHECK(ledger.total() == 1.0);

  Rng a(5), b(5);
  PrivacyLedger la, lb;
  CHECK(topk_dp(h, 2, 1.0, TopKStrategy::peel, a, la).words ==
        topk_dp(h, 2, 1.0, TopKStrategy::peel, b, lb).words);
}

TEST_CASE("keyword json") {
  PrivacyLedger ledger;
  auto j = to_json(topk_ndp(hist_of({{"a", 1}}), 1, ledger));
  CHECK(j["epsilon"] == "inf");
  CHECK(j["words"][0] == "a");
  auto hj = to_json(hist_of({{"a", 2}}));
  CHECK(hj["a"] == 2);
}

TEST_CASE("ten copies of a sentence scale its histogram by ten") {
  const std::string s = "The old doctor found the old bank near a river";
  auto single = build_histogram(std::vector<std::string>{s});
  auto ten = build_histogram(std::vector<std::string>(10, s));
  REQUIRE(single.counts.size() == ten.counts.size());
  for (const auto& [w, c] : single.counts) CHECK(ten.counts.at(w) == 10 * c);
}

TEST_CASE("topk_peel_probability matches the sequential oracle") {
  std::map<std::string, int> counts = {{"a", 4}, {"b", 1}, {"c", 2}, {"d", 0}};
  std::map<std::string, std::uint64_t> ucounts(counts.begin(), counts.end());
  auto h = hist_of(ucounts);
  for (double eps : {0.5, 1.0, 2.0}) {
    double total = 0.0;
    for (const auto& seq : oracle::ordered_sequences({"a", "b", "c", "d"}, 2)) {
      double p = topk_peel_probability(h, seq, eps);
      CHECK(std::abs(p - oracle::peel_sequence_probability(counts, seq, eps)) < 1e-12);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(topk_peel_probability(h, {"a", "a"}, 1.0) == 0.0);
  CHECK(topk_peel_probability(h, {"zzz"}, 1.0) == 0.0);
}
