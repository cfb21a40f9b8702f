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


#include "drift/decoding.h"

#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <random>
#include <sstream>

#include "drift/datasets.h"
#include "drift/oracle.h"
#include "test_util.h"

using namespace drift;

namespace {

LogitVector lv(std::vector<double> v) { return LogitVector{std::move(v)}; }

DriftConfig personalized(const AttributeCatalog& catalog, std::uint64_t seed, std::size_t m) {
  DriftConfig cfg;
  cfg.weights = random_unit_weights(catalog.size(), seed, catalog.names());
  cfg.subset = select_attributes(cfg.weights, m);
  cfg.max_tokens = 12;
  return cfg;
}

}  // namespace

TEST_CASE("composite logits follow the drift formula") {
  const auto h_llm = lv({1.0, 2.0, 3.0});
  const auto h_base = lv({0.0, 1.0, 0.0});
  const std::vector<LogitVector> attrs{lv({1.0, 1.0, 1.0}), lv({0.0, 3.0, -1.0})};
  const std::vector<double> p{0.6, -0.8};
  LogitVector corr;
  const auto out = composite_logits(h_llm, h_base, attrs, p, Beta(0.5), &corr);
  for (std::size_t v = 0; v < 3; ++v) {
    const double expect = h_llm[v] + 2.0 * (0.6 * (attrs[0][v] - h_base[v]) - 0.8 * (attrs[1][v] - h_base[v]));
    CHECK(out[v] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(corr[v] == doctest::Approx(expect - h_llm[v]).epsilon(1e-15));
  }
  // Smaller beta pulls harder.
  const auto strong = composite_logits(h_llm, h_base, attrs, p, Beta(0.1));
  CHECK(std::abs(strong[2] - h_llm[2]) > std::abs(out[2] - h_llm[2]));
  // No attributes: the LLM logits pass through.
  CHECK(composite_logits(h_llm, h_base, {}, {}, Beta(0.5)).values == h_llm.values);
}

TEST_CASE("composite logits reject shape errors and name non-finite attributes") {
  const auto h = lv({1.0, 2.0});
  CHECK_THROWS_AS(composite_logits(h, h, std::vector<LogitVector>{h}, std::vector<double>{}, Beta()),
                  InvalidArgument);
  CHECK_THROWS_AS(composite_logits(h, lv({1.0}), std::vector<LogitVector>{h}, std::vector<double>{1.0}, Beta()),
                  InvalidArgument);
  const std::vector<LogitVector> attrs{h, lv({1.0, 1e308})};
  try {
    composite_logits(h, lv({0.0, -1e308}), attrs, std::vector<double>{0.0, 1.0}, Beta(0.5));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("attribute 1") != std::string::npos);
  }
}

TEST_CASE("softmax of composite logits equals the normalized product of experts") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> beta_dist(0.2, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t vocab = 2 + rng() % 63;
    const std::size_t k = rng() % 9;
    const double beta = beta_dist(rng);
    const auto h_llm = testing::random_vector(vocab, rng);
    const auto h_base = testing::random_vector(vocab, rng);
    std::vector<std::vector<double>> raw;
    std::vector<LogitVector> attrs;
    for (std::size_t i = 0; i < k; ++i) {
      raw.push_back(testing::random_vector(vocab, rng));
      attrs.push_back(lv(raw.back()));
    }
    const auto p = testing::random_vector(k, rng, 1.0);
    const auto q = softmax(composite_logits(lv(h_llm), lv(h_base), attrs, p, Beta(beta)).values);
    const auto r = oracle::product_distribution(h_llm, h_base, raw, p, beta);
    for (std::size_t v = 0; v < vocab; ++v) REQUIRE(std::abs(q[v] - r[v]) <= 1e-9);
  }
}

TEST_CASE("sampler validation and names") {
  CHECK_THROWS_AS(SamplerSpec::with_temperature(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(SamplerSpec::with_top_k(0).validate(), InvalidArgument);
  CHECK_THROWS_AS(SamplerSpec::with_top_p(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(SamplerSpec::with_top_p(1.5).validate(), InvalidArgument);
  CHECK(SamplerSpec{}.kind == SamplerSpec::Kind::kTopP);
  CHECK(SamplerSpec{}.top_p == 0.9);
  for (auto kind : {SamplerSpec::Kind::kGreedy, SamplerSpec::Kind::kTemperature, SamplerSpec::Kind::kTopK,
                    SamplerSpec::Kind::kTopP}) {
    CHECK(parse_sampler_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_sampler_kind("beam"), InvalidArgument);
}

TEST_CASE("greedy picks the argmax, lowest index on ties") {
  CHECK(sample_token(lv({0.1, 3.0, 3.0, -1.0}), SamplerSpec::greedy(), 0) == 1);
  CHECK_THROWS_AS(sample_token(lv({}), SamplerSpec::greedy(), 0), InvalidArgument);
  CHECK_THROWS_AS(sample_token(lv({1.0, NAN}), SamplerSpec::greedy(), 0), NumericError);
}

TEST_CASE("top_k = 1 is greedy and a tiny nucleus keeps only the mode") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto h = lv(testing::random_vector(32, rng));
    const auto g = sample_token(h, SamplerSpec::greedy(), 0);
    CHECK(sample_token(h, SamplerSpec::with_top_k(1), rng()) == g);
    CHECK(sample_token(h, SamplerSpec::with_top_p(1e-9), rng()) == g);
  }
}

TEST_CASE("truncation never samples outside the support") {
  const auto h = lv({5.0, 4.0, 0.0, -3.0, 4.5});
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto k2 = sample_token(h, SamplerSpec::with_top_k(2), s);
    CHECK((k2 == 0 || k2 == 4));
    SamplerSpec both = SamplerSpec::with_top_p(0.99);
    both.top_k = 3;
    const auto b = sample_token(h, both, s);
    CHECK((b == 0 || b == 1 || b == 4));
  }
}

TEST_CASE("top_p = 1 sampling frequencies match softmax") {
  const auto h = lv({1.0, 0.0, -1.0, 2.0, 0.5});
  const auto p = softmax(h.values);
  std::vector<double> counts(5, 0.0);
  constexpr int kDraws = 50000;
  for (int s = 0; s < kDraws; ++s) counts[sample_token(h, SamplerSpec::with_top_p(1.0), s)] += 1;
  for (std::size_t v = 0; v < 5; ++v) {
    const double sigma = std::sqrt(kDraws * p[v] * (1 - p[v]));
    CHECK(std::abs(counts[v] - kDraws * p[v]) <= 4 * sigma);
  }
}

TEST_CASE("temperature flattens the distribution") {
  const auto h = lv({2.0, 0.0});
  int hot = 0, cold = 0;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    hot += sample_token(h, SamplerSpec::with_temperature(10.0), s) == 1;
    cold += sample_token(h, SamplerSpec::with_temperature(0.25), s) == 1;
  }
  CHECK(hot > 1500);
  CHECK(cold < 50);
}

TEST_CASE("zero weights decode exactly like base sampling") {
  const auto llm = testing::toy(1);
  const auto slm = testing::toy(2);
  const auto catalog = AttributeCatalog::standard();
  DriftConfig cfg;
  cfg.weights = WeightVector::zero(catalog.names());
  cfg.max_tokens = 20;
  CHECK(cfg.unpersonalized());
  const auto a = generate(*llm, *slm, catalog, cfg, "t1 t2", 99);
  const auto b = generate_base(*llm, cfg.sampler, 20, "t1 t2", 99);
  CHECK(a.tokens == b.tokens);
  CHECK(a.tokens.size() == 20);
  CHECK(llm->detokenize(a.tokens) == llm->detokenize(b.tokens));
}

TEST_CASE("each step costs one LLM call and m + 1 small-LM calls") {
  auto llm = std::make_shared<CountingBackend>(testing::toy(1));
  auto slm = std::make_shared<CountingBackend>(testing::toy(2));
  const auto catalog = AttributeCatalog::standard();
  for (std::size_t m : {1UL, 3UL, 7UL}) {
    llm->reset();
    slm->reset();
    const auto cfg = personalized(catalog, m, m);
    const auto gen = generate(*llm, *slm, catalog, cfg, "t5", 3);
    REQUIRE(gen.tokens.size() == cfg.max_tokens);
    CHECK(llm->logit_calls() == cfg.max_tokens);
    CHECK(slm->logit_calls() == cfg.max_tokens * (m + 1));
    CHECK(llm->score_calls() == 0);
    CHECK(slm->score_calls() == 0);
  }
  llm->reset();
  slm->reset();
  DriftConfig base;
  base.weights = WeightVector::zero(catalog.names());
  base.max_tokens = 5;
  generate(*llm, *slm, catalog, base, "t5", 3);
  CHECK(llm->logit_calls() == 5);
  CHECK(slm->logit_calls() == 0);
}

TEST_CASE("greedy drift decoding follows the per-step composite argmax") {
  const auto llm = testing::toy(1, 16);
  const auto slm = testing::toy(2, 16);
  const auto catalog = AttributeCatalog::standard();
  auto cfg = personalized(catalog, 5, 3);
  cfg.sampler = SamplerSpec::greedy();
  cfg.max_tokens = 10;
  const auto gen = generate(*llm, *slm, catalog, cfg, "t3 t4", 0);

  std::vector<TokenId> ctx = llm->tokenize("t3 t4");
  for (std::size_t t = 0; t < gen.tokens.size(); ++t) {
    const auto h = llm->logits_for_context("", ctx);
    const auto hb = slm->logits_for_context(catalog.base().system_prompt, ctx);
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t v = 0; v < 16; ++v) {
      double s = h[v];
      for (std::size_t i : cfg.subset.indices) {
        s += cfg.weights[i] / 0.5 * (slm->logits_for_context(catalog.attribute(i).system_prompt, ctx)[v] - hb[v]);
      }
      if (s > best_score) {
        best_score = s;
        best = v;
      }
    }
    CHECK(gen.tokens[t] == best);
    ctx.push_back(gen.tokens[t]);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto llm = testing::toy(1);
  const auto slm = testing::toy(2);
  const auto catalog = AttributeCatalog::standard();
  const auto cfg = personalized(catalog, 8, 7);
  const auto a = generate(*llm, *slm, catalog, cfg, "t1", 5);
  const auto b = generate(*llm, *slm, catalog, cfg, "t1", 5);
  const auto c = generate(*llm, *slm, catalog, cfg, "t1", 6);
  CHECK(a.tokens == b.tokens);
  CHECK(a.tokens != c.tokens);
  CHECK(step_seed(5, 0) != step_seed(5, 1));
}

TEST_CASE("decoding preconditions") {
  const auto catalog = AttributeCatalog::standard();
  const auto cfg = personalized(catalog, 1, 3);
  CHECK_THROWS_AS(generate(*testing::toy(1, 64), *testing::toy(2, 32), catalog, cfg, "t1", 0), PreconditionError);

  auto no_logits = std::make_shared<testing::HookBackend>(testing::toy(2));
  no_logits->logits_supported = false;
  CHECK_THROWS_AS(generate(*testing::toy(1), *no_logits, catalog, cfg, "t1", 0), PreconditionError);

  auto bad = cfg;
  bad.max_tokens = 0;
  CHECK_THROWS_AS(generate(*testing::toy(1), *testing::toy(2), catalog, bad, "t1", 0), InvalidArgument);
  bad = cfg;
  bad.subset.indices.push_back(99);
  CHECK_THROWS_AS(generate(*testing::toy(1), *testing::toy(2), catalog, bad, "t1", 0), InvalidArgument);
}

TEST_CASE("a backend failure mid-generation returns the partial output") {
  auto slm = std::make_shared<testing::HookBackend>(testing::toy(2));
  slm->on_logits = [](const LogitRequest& r, const LmBackend& inner) -> LogitVector {
    if (r.prefix.size() >= 3) throw TransportError("lost connection");
    return inner.next_logits(r);
  };
  const auto catalog = AttributeCatalog::standard();
  const auto cfg = personalized(catalog, 1, 3);
  const auto gen = generate(*testing::toy(1), *slm, catalog, cfg, "t1", 0);
  CHECK(gen.tokens.size() == 3);
  REQUIRE(gen.error.has_value());
  CHECK(gen.error->find("lost connection") != std::string::npos);
}

TEST_CASE("generation stops at the end-of-sequence token") {
  const auto llm = testing::toy(1, 8, TokenId{0});
  const auto slm = testing::toy(2, 8, TokenId{0});
  const auto catalog = AttributeCatalog::standard();
  auto cfg = personalized(catalog, 4, 2);
  cfg.max_tokens = 500;
  const auto gen = generate(*llm, *slm, catalog, cfg, "t1", 11);
  REQUIRE(gen.stopped_at_eos);
  CHECK(gen.tokens.back() == 0);
  CHECK(gen.tokens.size() < 500);
}

TEST_CASE("traces and entropy shift") {
  const auto catalog = AttributeCatalog::standard();
  auto cfg = personalized(catalog, 2, 3);
  cfg.max_tokens = 4;
  const auto gen = generate(*testing::toy(1), *testing::toy(2), catalog, cfg, "t1", 0);
  REQUIRE(gen.traces.size() == 4);
  const auto& tr = gen.traces[0];
  CHECK(tr.h_attrs.size() == 3);
  for (std::size_t v = 0; v < tr.h_llm.size(); ++v) {
    CHECK(tr.h_drift[v] == doctest::Approx(tr.h_llm[v] + tr.correction[v]).epsilon(1e-15));
  }
  const auto shift = measure_entropy_shift(gen.traces);
  double mean = 0.0;
  for (const auto& t : gen.traces) mean += t.entropy_drift_bits / 4.0;
  CHECK(shift.mean_drift_bits == doctest::Approx(mean));
  CHECK(shift.mean_base_bits > 0.0);
  CHECK_THROWS_AS(measure_entropy_shift({}), InvalidArgument);

  std::ostringstream os;
  write_trace_jsonl(os, gen.traces);
  std::istringstream is(os.str());
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["step"] == n);
    CHECK(j["h_attrs"].size() == 3);
    ++n;
  }
  CHECK(n == 4);
}
