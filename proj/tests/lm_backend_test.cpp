/* Copyright 2026 The Drift Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "drift/lm_backend.h"

#include <doctest.h>

#include <cmath>

#include "drift/toy_lm.h"
#include "test_util.h"

using namespace drift;

TEST_CASE("toy tokenizer maps literal tokens and hashes other words") {
  const ToyLm lm({16, 2, 0, std::nullopt});
  CHECK(lm.tokenize("t3 t15") == std::vector<TokenId>{3, 15});
  const auto hashed = lm.tokenize("t16 hello");
  CHECK(hashed.size() == 2);
  CHECK(hashed[0] == fnv1a64("t16") % 16);
  CHECK(hashed[1] == fnv1a64("hello") % 16);
  CHECK(lm.tokenize("  ").empty());
  const std::vector<TokenId> ids{1, 2, 3};
  CHECK(lm.detokenize(ids) == "t1 t2 t3");
  CHECK(lm.tokenize(lm.detokenize(ids)) == ids);
  CHECK(lm.tokenizer() == TokenizerSpec{16, "toy-ws-v16"});
}

TEST_CASE("toy config validation") {
  CHECK_THROWS_AS(ToyLm({3, 2, 0, std::nullopt}), InvalidArgument);
  CHECK_THROWS_AS(ToyLm({8, 0, 0, std::nullopt}), InvalidArgument);
  CHECK_THROWS_AS(ToyLm({8, 2, 0, TokenId{8}}), InvalidArgument);
}

TEST_CASE("toy scores are deterministic log-probabilities") {
  const auto lm = testing::toy(5);
  const ScoreRequest req{"You are an AI assistant.", "t1 t2", "t5 t9 t33"};
  const auto a = lm->score(req);
  const auto b = testing::toy(5)->score(req);
  CHECK(a == b);
  REQUIRE(a.token_logprobs.size() == 3);
  double sum = 0.0;
  for (double lp : a.token_logprobs) {
    CHECK(lp <= 0.0);
    sum += lp;
  }
  CHECK(a.total_logprob == doctest::Approx(sum).epsilon(1e-15));
  CHECK_NOTHROW(validate_score(a, "toy"));
  CHECK(testing::toy(6)->score(req).total_logprob != a.total_logprob);
  CHECK_THROWS_AS(lm->score({"s", "t1", ""}), InvalidArgument);
}

TEST_CASE("toy score agrees with next_logits") {
  const auto lm = testing::toy(11);
  const std::string sys = "You are a humorous AI assistant.";
  const auto s = lm->score({sys, "t4 t8", "t10 t20"});
  const auto h0 = lm->next_logits({sys, "t4 t8", {}});
  const auto h1 = lm->next_logits({sys, "t4 t8", {10}});
  CHECK(s.token_logprobs[0] == doctest::Approx(log_softmax(h0.values)[10]).epsilon(1e-15));
  CHECK(s.token_logprobs[1] == doctest::Approx(log_softmax(h1.values)[20]).epsilon(1e-15));
  CHECK(h0.size() == 64);
  for (double v : h0.values) CHECK(std::abs(v) < 4.0);
  CHECK_THROWS_AS(lm->next_logits({sys, "t1", {64}}), PreconditionError);
}

TEST_CASE("toy prompt dependence is additive per prompt word") {
  // Appending a word shifts the pre-squash score by that word's term only,
  // so the word order of the system prompt does not matter.
  const auto lm = testing::toy(3);
  const std::vector<TokenId> ctx{1, 2};
  CHECK(lm->logits_for_context("alpha beta", ctx).values ==
        lm->logits_for_context("Beta, ALPHA!", ctx).values);
  CHECK(lm->logits_for_context("alpha", ctx).values != lm->logits_for_context("alpha beta", ctx).values);
  CHECK(lm->logits_for_context("alpha beta", ctx).values !=
        lm->logits_for_context("alpha beta beta", ctx).values);
}

TEST_CASE("context beyond the order is ignored") {
  const auto lm = testing::toy(3);
  const std::vector<TokenId> a{9, 1, 2}, b{7, 1, 2};
  CHECK(lm->logits_for_context("s", a).values == lm->logits_for_context("s", b).values);
}

TEST_CASE("validate_score rejects contract violations") {
  CHECK_THROWS_AS(validate_score({{0.1}, 0.1}, "x"), CapabilityError);
  CHECK_THROWS_AS(validate_score({{-1.0, -2.0}, -2.0}, "x"), CapabilityError);
  CHECK_NOTHROW(validate_score({{-1.0, -2.0}, -3.0}, "x"));
}

TEST_CASE("batch calls equal sequential calls in order") {
  const auto lm = testing::toy(1);
  std::vector<ScoreRequest> reqs;
  std::vector<LogitRequest> lreqs;
  for (int i = 0; i < 20; ++i) {
    reqs.push_back({"system " + std::to_string(i), "t1", "t" + std::to_string(i) + " t2"});
    lreqs.push_back({"system " + std::to_string(i), "t1", {TokenId(i)}});
  }
  const auto batch = lm->batch_score(reqs);
  const auto lbatch = lm->batch_next_logits(lreqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(batch[i] == lm->score(reqs[i]));
    CHECK(lbatch[i].values == lm->next_logits(lreqs[i]).values);
  }
  CHECK_THROWS_AS(lm->batch_score({}), InvalidArgument);
  CHECK_THROWS_AS(lm->batch_next_logits({}), InvalidArgument);
}

TEST_CASE("batch failure reports the first failing index and the error kind") {
  auto hook = std::make_shared<testing::HookBackend>(testing::toy(1));
  hook->on_score = [](const ScoreRequest& r, const LmBackend& inner) -> ScoreResponse {
    if (r.system_prompt == "bad") throw TransportError("connection reset");
    return inner.score(r);
  };
  std::vector<ScoreRequest> reqs(6, ScoreRequest{"ok", "t1", "t2"});
  reqs[2].system_prompt = "bad";
  reqs[4].system_prompt = "bad";
  try {
    hook->batch_score(reqs);
    FAIL("expected BatchError");
  } catch (const BatchError& e) {
    CHECK(e.index() == 2);
    CHECK(e.kind() == ErrorKind::kTransport);
    CHECK(std::string(e.what()).find("connection reset") != std::string::npos);
  }
}

TEST_CASE("counting backend counts per endpoint") {
  auto counting = std::make_shared<CountingBackend>(testing::toy(2));
  counting->score({"s", "t1", "t2"});
  std::vector<LogitRequest> lreqs(3, LogitRequest{"s", "t1", {}});
  counting->batch_next_logits(lreqs);
  CHECK(counting->score_calls() == 1);
  CHECK(counting->logit_calls() == 3);
  counting->reset();
  CHECK(counting->score_calls() == 0);
  CHECK(counting->fingerprint() == "toy:v64:o2:s2");
}

TEST_CASE("default detokenize joins decimal ids") {
  testing::HookBackend hook(testing::toy());
  const std::vector<TokenId> ids{4, 5};
  CHECK(hook.LmBackend::detokenize(ids) == "4 5");
}
