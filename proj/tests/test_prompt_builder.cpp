#include "doctest.h"
#include "dpgtr/prompt_builder.hpp"
#include "oracles.hpp"

using namespace dpgtr;

namespace {

class Scripted : public LlmService {
 public:
  explicit Scripted(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  ChatResponse complete(const ChatRequest& req) override {
    last = req;
    if (calls >= replies_.size()) throw LlmError("down", 503, 1, true);
    ChatResponse r;
    r.text = replies_[calls++];
    r.tokens_generated = 1;
    r.usage_reported = true;
    return r;
  }
  std::size_t calls = 0;
  ChatRequest last;

 private:
  std::vector<std::string> replies_;
};

}  // namespace

TEST_CASE("final prompt is byte exact") {
  auto req = FinalPromptRequest::make("What is the capital of France?", {"capital", "france"});
  CHECK(render_template(req) ==
        "Refer to the following question to generate a new question:\n"
        "What is the capital of France?\n"
        "Avoid using the following tokens:\n"
        "capital, france");
}

TEST_CASE("final prompt edge cases") {
  auto empty_kw = FinalPromptRequest::make("Q?", {});
  CHECK(render_template(empty_kw).ends_with("Avoid using the following tokens:\n"));
  auto dup = FinalPromptRequest::make("Q?", {"b", "a", "b"});
  CHECK(dup.forbidden == std::vector<std::string>{"b", "a"});
  CHECK_THROWS_AS(render_template(FinalPromptRequest::make("", {"a"})), DomainError);
  auto bad = FinalPromptRequest::make("Q", {});
  bad.template_id = "other";
  CHECK_THROWS_AS(render_template(bad), DomainError);
}

TEST_CASE("final prompt matches an independent renderer") {
  Rng rng(21);
  const std::vector<std::string> pool = {"alpha", "beta", "gamma", "delta", "eps", "zeta"};
  for (int i = 0; i < 100; ++i) {
    std::string exemplar = "Question " + std::to_string(rng.below(1000)) + " about " + pool[rng.below(6)] + "?";
    std::vector<std::string> kw;
    for (std::size_t j = 0, n = rng.below(6); j < n; ++j) {
      const auto& w = pool[rng.below(6)];
      if (std::find(kw.begin(), kw.end(), w) == kw.end()) kw.push_back(w);
    }
    CHECK(render_template(FinalPromptRequest::make(exemplar, kw)) ==
          oracle::render_final_prompt(exemplar, kw));
  }
}

TEST_CASE("leak detection") {
  CHECK(find_leaked_words("Where is the Capital?", {"capital", "paris"}) ==
        std::vector<std::string>{"capital"});
  CHECK(find_leaked_words("nothing here", {"capital"}).empty());
}

TEST_CASE("generate_sanitized flags leakage and re-asks") {
  auto req = FinalPromptRequest::make("Q about cats?", {"cat"});
  Scripted svc({"a cat question", "another cat", "a clean one"});
  PrivacyLedger ledger;
  GenerateOptions opts;
  auto out = generate_sanitized(req, svc, ledger, opts);
  CHECK(out.leakage_flag);
  CHECK(out.leaked_words == std::vector<std::string>{"cat"});
  CHECK(out.sanitized == "a cat question");
  CHECK(ledger.total() == 0.0);
  CHECK(svc.last.temperature == 0.0);
  CHECK(svc.last.messages.back().content == render_template(req));

  Scripted svc2({"a cat question", "another cat", "a clean one"});
  opts.max_regenerations = 2;
  auto out2 = generate_sanitized(req, svc2, ledger, opts);
  CHECK_FALSE(out2.leakage_flag);
  CHECK(out2.regenerations == 2);
  CHECK(out2.sanitized == "a clean one");
  CHECK(ledger.total() == 0.0);

  opts.max_regenerations = 3;
  CHECK_THROWS_AS(generate_sanitized(req, svc2, ledger, opts), DomainError);
}

TEST_CASE("generate_sanitized failure handling") {
  auto req = FinalPromptRequest::make("Q?", {});
  Scripted down({});
  PrivacyLedger ledger;
  GenerateOptions opts;
  CHECK_THROWS_AS(generate_sanitized(req, down, ledger, opts), SanitizationError);
  opts.fallback_to_exemplar = true;
  auto out = generate_sanitized(req, down, ledger, opts);
  CHECK(out.used_fallback);
  CHECK(out.sanitized == "Q?");
  CHECK_FALSE(out.warnings.empty());

  Scripted ok({"fine"});
  auto warm = FinalPromptRequest::make("Q?", {}, 0.7);
  auto w = generate_sanitized(warm, ok, ledger, GenerateOptions{});
  CHECK(w.warnings.size() == 1);
}

TEST_CASE("leakage flag against mock stage-3 behaviour") {
  auto req = FinalPromptRequest::make("Where can I buy a cheap house", {"house", "cheap"});
  PrivacyLedger ledger;
  MockLlm obedient(MockOptions{true});
  auto clean = generate_sanitized(req, obedient, ledger);
  CHECK_FALSE(clean.leakage_flag);

  Scripted verbatim({"Where can I buy a cheap house"});
  auto leaked = generate_sanitized(req, verbatim, ledger);
  CHECK(leaked.leakage_flag);
  CHECK(leaked.leaked_words == std::vector<std::string>{"house", "cheap"});
  CHECK(ledger.total() == 0.0);
}
