#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "dpgtr/dp_mechanisms.hpp"
#include "dpgtr/error.hpp"
#include "oracles.hpp"

using namespace dpgtr;

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }

}  // namespace

TEST_CASE("ClipBounds rejects empty or inverted intervals") {
  CHECK_THROWS_AS(ClipBounds(0.0, 0.0), DomainError);
  CHECK_THROWS_AS(ClipBounds(2.0, 1.0), DomainError);
  CHECK_THROWS_AS(ClipBounds(0.0, INFINITY), DomainError);
  CHECK(ClipBounds(-1.0, 3.0).range() == 4.0);
}

TEST_CASE("epsilon_per_token") {
  // Llama column: 2·width = 19.4.
  const auto llama = ClipBounds::with_width(9.7);
  CHECK(epsilon_per_token(1.0, llama) == doctest::Approx(19.4).epsilon(1e-15));
  CHECK(round1(epsilon_per_token(0.15, llama)) == 129.3);
  CHECK(epsilon_per_token(1.0, ClipBounds::with_width(2.0)) == 4.0);
  CHECK_THROWS_AS(epsilon_per_token(0.0, llama), DomainError);
  CHECK_THROWS_AS(epsilon_per_token(-0.5, llama), DomainError);
}

TEST_CASE("temperature_for_epsilon") {
  CHECK(temperature_for_epsilon(534.2, ClipBounds::with_width(26.71)) ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(temperature_for_epsilon(19.4, ClipBounds::with_width(9.7)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(temperature_for_epsilon(1e12, ClipBounds::with_width(9.7)) < 1e-10);
  CHECK_THROWS_AS(temperature_for_epsilon(0.0, ClipBounds::with_width(9.7)), DomainError);

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    ClipBounds b(rng.uniform() * 10 - 5, rng.uniform() * 10 + 5.5);
    double t = 0.01 + rng.uniform() * 5.0;
    double back = temperature_for_epsilon(epsilon_per_token(t, b), b);
    CHECK(std::abs(back - t) / t < 1e-12);
  }
}

TEST_CASE("clip_logits") {
  const ClipBounds b(0.0, 10.0);
  CHECK(clip_logits(LogitVector({-5, 0, 30}), b) == LogitVector({0, 0, 10}));
  CHECK(clip_logits(LogitVector({1, 2, 3}), b) == LogitVector({1, 2, 3}));

  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(2 + rng.below(9));
    for (double& x : v) x = rng.uniform() * 40.0 - 15.0;
    LogitVector once = clip_logits(LogitVector(v), b);
    CHECK(clip_logits(once, b) == once);
    for (double x : once.values()) CHECK((x >= 0.0 && x <= 10.0));
  }
}

TEST_CASE("LogitVector needs two entries") {
  CHECK_THROWS_AS(LogitVector({1.0}), DomainError);
}

TEST_CASE("softmax closed forms") {
  auto p = softmax(std::vector<double>{0.0, std::log(3.0)}, 1.0);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
  auto q = softmax(std::vector<double>{7.0, 7.0}, 0.3);
  CHECK(q[0] == doctest::Approx(0.5));
  // Max subtraction keeps large ranges finite.
  auto big = softmax(std::vector<double>{0.0, 50.0}, 0.01);
  CHECK(std::isfinite(big[0]));
  CHECK(big[1] == doctest::Approx(1.0));
}

TEST_CASE("em_sample matches exact softmax") {
  const std::vector<double> u = {0.0, 1.0, 2.0};
  const auto exact = oracle::softmax(u, 0.5);
  Rng rng(2024);
  std::vector<double> freq(3, 0.0);
  const int draws = 1'000'000;
  LogitVector lv(u);
  for (int i = 0; i < draws; ++i) freq[em_sample(lv, 0.5, rng)] += 1.0;
  for (double& f : freq) f /= draws;
  CHECK(oracle::total_variation(freq, exact) < 0.005);
}

TEST_CASE("em_sample equal logits split evenly") {
  Rng rng(5);
  LogitVector lv({3.0, 3.0});
  int first = 0;
  for (int i = 0; i < 200000; ++i) first += em_sample(lv, 0.7, rng) == 0;
  CHECK(std::abs(first / 200000.0 - 0.5) < 0.005);
}

TEST_CASE("em_sample is deterministic under a seed and rejects non-finite logits") {
  LogitVector lv({0.1, 0.5, 0.2, 0.9});
  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) CHECK(em_sample(lv, 1.0, a) == em_sample(lv, 1.0, b));
  Rng r(1);
  CHECK_THROWS_AS(em_sample(LogitVector({0.0, NAN}), 1.0, r), DomainError);
  CHECK_THROWS_AS(em_sample(LogitVector({0.0, INFINITY}), 1.0, r), DomainError);
  CHECK_THROWS_AS(em_sample(lv, 0.0, r), DomainError);
}

TEST_CASE("per-token probability ratio bounded by exp(2·width/T)") {
  // Exhaustive grid over [0,1]^3 pairs at 0.25 resolution.
  for (double t : {0.2, 1.0, 3.0}) {
    double worst = oracle::max_softmax_ratio_on_grid(3, 0.0, 1.0, 0.25, t);
    CHECK(worst <= std::exp(2.0 / t) + 1e-9);
  }
}

TEST_CASE("ledger totals follow sequential composition") {
  PrivacyLedger empty;
  CHECK(ledger_total(empty) == 0.0);

  PrivacyLedger ledger;
  for (int i = 0; i < 10; ++i) {
    ledger.append({LedgerStage::rewrite, "em", 19.4, 20, "", false, 1.0});
  }
  ledger.append({LedgerStage::post_process, "topk_ndp", kInfiniteEpsilon, 1, "", false, {}});
  // m·n·ε₁ with m=10, n=20.
  CHECK(ledger_total(ledger) == 10.0 * 20.0 * 19.4);
  CHECK(ledger_total(ledger) == doctest::Approx(3880.0).epsilon(1e-15));

  ledger.append({LedgerStage::keyword_release, "peel", 1.0, 1, "", false, {}});
  CHECK(ledger_total(ledger) == 10.0 * 20.0 * 19.4 + 1.0);
  CHECK(ledger_total(ledger) == doctest::Approx(3881.0).epsilon(1e-15));
  CHECK(ledger.total(LedgerStage::rewrite) == 10.0 * 20.0 * 19.4);
  CHECK(ledger.total(LedgerStage::post_process) == 0.0);
}

TEST_CASE("ledger total is permutation invariant and monotone") {
  Rng rng(9);
  std::vector<LedgerEntry> entries;
  for (int i = 0; i < 40; ++i) {
    auto stage = static_cast<LedgerStage>(rng.below(3));
    double eps = stage == LedgerStage::post_process ? kInfiniteEpsilon : rng.uniform() * 50.0;
    entries.push_back({stage, "x", eps, 1 + rng.below(30), "", false, {}});
  }
  PrivacyLedger forward;
  double prev = 0.0;
  for (const auto& e : entries) {
    forward.append(e);
    CHECK(forward.total() >= prev);
    prev = forward.total();
  }
  for (int trial = 0; trial < 20; ++trial) {
    auto shuffled = entries;
    shuffle(shuffled, rng);
    PrivacyLedger l;
    for (const auto& e : shuffled) l.append(e);
    CHECK(l.total() == forward.total());
  }
}

TEST_CASE("ledger rejects infinite epsilon outside post-processing") {
  PrivacyLedger l;
  CHECK_THROWS_AS(l.append({LedgerStage::rewrite, "x", kInfiniteEpsilon, 1, "", false, {}}),
                  DomainError);
  CHECK_THROWS_AS(l.append({LedgerStage::rewrite, "x", -1.0, 1, "", false, {}}), DomainError);
}

TEST_CASE("schedule_total") {
  const auto b = ClipBounds::with_width(9.7);
  std::vector<std::uint64_t> one = {1};
  std::vector<double> t1 = {1.0};
  CHECK(schedule_total(one, t1, b) == doctest::Approx(19.4).epsilon(1e-15));

  std::vector<std::uint64_t> counts(11, 10);
  std::vector<double> temps;
  double expected = 0.0;
  for (int i = 0; i <= 10; ++i) {
    double t = 0.5 + 0.1 * i;
    temps.push_back(t);
    expected += 10.0 * 19.4 / t;
  }
  CHECK(schedule_total(counts, temps, b) == doctest::Approx(expected).epsilon(1e-12));

  auto reversed = temps;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(schedule_total(counts, reversed, b) == schedule_total(counts, temps, b));

  std::vector<double> short_temps = {1.0};
  CHECK_THROWS_AS(schedule_total(counts, short_temps, b), DomainError);
}
