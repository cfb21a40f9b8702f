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


#include "drift/rewarding.h"

#include <doctest.h>

#include <cmath>
#include <random>

#include "drift/approximation.h"
#include "test_util.h"

using namespace drift;

namespace {

std::vector<PreferencePair> small_dataset(std::size_t n) {
  std::vector<PreferencePair> out;
  for (std::size_t j = 0; j < n; ++j) {
    out.push_back({"p" + std::to_string(j), "t" + std::to_string(j % 7) + " t3",
                   "t" + std::to_string(10 + j) + " t1", "t" + std::to_string(40 - j) + " t2"});
  }
  return out;
}

// Adds c(system, prompt) <= 0 to every score: a per-prompt, per-attribute
// normalizer shift that is shared by both responses of a pair.
std::shared_ptr<testing::HookBackend> offset_backend(std::shared_ptr<const LmBackend> inner,
                                                     std::uint64_t salt) {
  auto hook = std::make_shared<testing::HookBackend>(std::move(inner));
  hook->on_score = [salt](const ScoreRequest& r, const LmBackend& base) {
    auto s = base.score(r);
    const double c = -static_cast<double>((fnv1a64(r.system_prompt + "|" + r.prompt) ^ salt) % 1000) / 100.0;
    s.token_logprobs.back() += c;
    s.total_logprob += c;
    return s;
  };
  return hook;
}

}  // namespace

TEST_CASE("differential reward is the score gap to the base prompt") {
  const auto lm = testing::toy(3);
  const auto catalog = AttributeCatalog::standard().prefix(6);
  const auto r = differential_reward(*lm, catalog, "t1 t2", "t7 t8 t9");
  REQUIRE(r.size() == 6);
  const double base = lm->score({catalog.base().system_prompt, "t1 t2", "t7 t8 t9"}).total_logprob;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r[i] == lm->score({catalog.attribute(i).system_prompt, "t1 t2", "t7 t8 t9"}).total_logprob - base);
  }
}

TEST_CASE("an attribute equal to the base prompt has zero reward") {
  const AttributeCatalog catalog({"base", "You are an AI assistant."},
                                 {{"same", "You are an AI assistant."}, {"humor", "You are a humorous AI assistant."}});
  const auto r = differential_reward(*testing::toy(), catalog, "t1", "t2 t3");
  CHECK(r[0] == 0.0);
  CHECK(r[1] != 0.0);
}

TEST_CASE("length normalization divides by the token count") {
  const auto lm = testing::toy(3);
  const auto catalog = AttributeCatalog::standard().prefix(2);
  const auto plain = differential_reward(*lm, catalog, "t1", "t2 t3 t4");
  RewardOptions opts;
  opts.length_normalized = true;
  const auto norm = differential_reward(*lm, catalog, "t1", "t2 t3 t4", opts);
  for (std::size_t i = 0; i < 2; ++i) CHECK(norm[i] == doctest::Approx(plain[i] / 3.0).epsilon(1e-14));
}

TEST_CASE("per-prompt normalizer offsets cancel in W - L") {
  const auto lm = testing::toy(8);
  const auto catalog = AttributeCatalog::standard().prefix(10);
  const auto pairs = small_dataset(12);
  const auto clean = build_feature_matrices(*lm, catalog, pairs).features;
  const auto shifted = build_feature_matrices(*offset_backend(lm, 77), catalog, pairs).features;
  bool w_changed = false;
  for (std::size_t j = 0; j < clean.n(); ++j) {
    for (std::size_t i = 0; i < clean.k(); ++i) {
      w_changed = w_changed || clean.W(j, i) != shifted.W(j, i);
      CHECK(std::abs((clean.W(j, i) - clean.L(j, i)) - (shifted.W(j, i) - shifted.L(j, i))) <= 1e-12);
    }
  }
  CHECK(w_changed);
  const auto p0 = solve_weights(clean).p;
  const auto p1 = solve_weights(shifted).p;
  for (std::size_t i = 0; i < p0.size(); ++i) CHECK(std::abs(p0[i] - p1[i]) <= 1e-12);
}

TEST_CASE("feature matrices: append, select, swap, validate") {
  FeatureMatrixPair fm;
  fm.W = Matrix(0, 2);
  fm.L = Matrix(0, 2);
  fm.append("a", std::vector<double>{1, 2}, std::vector<double>{3, 4});
  fm.append("b", std::vector<double>{5, 6}, std::vector<double>{7, 8});
  CHECK(fm.n() == 2);
  CHECK(fm.k() == 2);
  const std::vector<std::size_t> rows{1};
  const auto s = fm.select(rows);
  CHECK(s.n() == 1);
  CHECK(s.pair_ids[0] == "b");
  CHECK(s.W(0, 1) == 6);
  const auto sw = fm.swapped();
  CHECK(sw.W(0, 0) == 3);
  CHECK(sw.L(0, 0) == 1);
  CHECK_NOTHROW(fm.validate());
  CHECK_THROWS_AS(fm.append("c", std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
  fm.W(0, 0) = NAN;
  CHECK_THROWS_AS(fm.validate(), NumericError);
  const std::vector<std::size_t> bad{2};
  CHECK_THROWS_AS(fm.select(bad), InvalidArgument);
}

TEST_CASE("parallel and serial feature builds are identical") {
  const auto lm = testing::toy(5);
  const auto catalog = AttributeCatalog::standard();
  const auto pairs = small_dataset(16);
  BuildOptions serial;
  serial.parallel = false;
  const auto a = build_feature_matrices(*lm, catalog, pairs).features;
  const auto b = build_feature_matrices(*lm, catalog, pairs, serial).features;
  CHECK(a.W == b.W);
  CHECK(a.L == b.L);
  CHECK(a.pair_ids == b.pair_ids);
  CHECK(a.catalog_fingerprint == catalog.fingerprint());
}

TEST_CASE("failing pairs abort the build or are skipped on request") {
  auto hook = std::make_shared<testing::HookBackend>(testing::toy());
  hook->on_score = [](const ScoreRequest& r, const LmBackend& inner) -> ScoreResponse {
    if (r.prompt == "t2 t3") throw TransportError("boom");
    return inner.score(r);
  };
  const auto catalog = AttributeCatalog::standard().prefix(3);
  const auto pairs = small_dataset(5);  // pair p2 has prompt "t2 t3"
  try {
    build_feature_matrices(*hook, catalog, pairs);
    FAIL("expected failure");
  } catch (const DriftError& e) {
    CHECK(e.kind() == ErrorKind::kTransport);
    CHECK(std::string(e.what()).find("p2") != std::string::npos);
  }
  BuildOptions skip;
  skip.skip_failures = true;
  const auto built = build_feature_matrices(*hook, catalog, pairs, skip);
  CHECK(built.features.n() == 4);
  CHECK(built.skipped == std::vector<std::string>{"p2"});
  CHECK_THROWS_AS(build_feature_matrices(*hook, catalog, {}), InvalidArgument);
}

TEST_CASE("feature cache avoids rescoring and survives reloads") {
  testing::TempDir dir;
  const auto path = dir / "cache.jsonl";
  auto counting = std::make_shared<CountingBackend>(testing::toy(2));
  const auto catalog = AttributeCatalog::standard().prefix(4);
  const auto pairs = small_dataset(3);
  FeatureCache cache(path);
  BuildOptions opts;
  opts.cache = &cache;
  const auto first = build_feature_matrices(*counting, catalog, pairs, opts).features;
  CHECK(counting->score_calls() == 3 * 2 * 5);
  CHECK(cache.size() == 3);
  counting->reset();
  const auto second = build_feature_matrices(*counting, catalog, pairs, opts).features;
  CHECK(counting->score_calls() == 0);
  CHECK(second.W == first.W);

  FeatureCache reloaded(path);
  CHECK(reloaded.size() == 3);
  auto hit = reloaded.find("p1", catalog.fingerprint(), counting->fingerprint());
  REQUIRE(hit.has_value());
  CHECK(hit->w_row == std::vector<double>(first.W.row(1).begin(), first.W.row(1).end()));
  CHECK_FALSE(reloaded.find("p1", "other", counting->fingerprint()).has_value());

  // Length-normalized rows live under a different key.
  opts.reward.length_normalized = true;
  counting->reset();
  build_feature_matrices(*counting, catalog, pairs, opts);
  CHECK(counting->score_calls() == 3 * 2 * 5);
}

TEST_CASE("unit implicit preference is the mean row gap") {
  FeatureMatrixPair fm;
  fm.W = Matrix(0, 2);
  fm.L = Matrix(0, 2);
  fm.append("a", std::vector<double>{1, 0}, std::vector<double>{0, 1});
  fm.append("b", std::vector<double>{3, 0}, std::vector<double>{0, 0});
  const auto u = unit_implicit_preference(fm);
  CHECK(u[0] == 2.0);
  CHECK(u[1] == -0.5);
}
