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


#include "drift/approximation.h"

#include <doctest.h>

#include <cmath>
#include <random>

#include "drift/oracle.h"
#include "test_util.h"

using namespace drift;

namespace {

FeatureMatrixPair random_features(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMatrixPair fm;
  fm.W = Matrix(0, k);
  fm.L = Matrix(0, k);
  for (std::size_t j = 0; j < n; ++j) {
    fm.append("p" + std::to_string(j), testing::random_vector(k, rng), testing::random_vector(k, rng));
  }
  return fm;
}

std::vector<RewardRowPair> rows_of(const FeatureMatrixPair& fm) {
  std::vector<RewardRowPair> rows;
  for (std::size_t j = 0; j < fm.n(); ++j) {
    rows.push_back({{fm.W.row(j).begin(), fm.W.row(j).end()}, {fm.L.row(j).begin(), fm.L.row(j).end()}});
  }
  return rows;
}

AttributeCatalog catalog_k(std::size_t k) { return AttributeCatalog::standard().prefix(k); }

}  // namespace

TEST_CASE("closed form on a hand example") {
  const auto r = solve_from_direction({3.0, 4.0}, {"a", "b"}, 2);
  CHECK(r.p[0] == doctest::Approx(0.6));
  CHECK(r.p[1] == doctest::Approx(0.8));
  CHECK(r.objective == doctest::Approx(5.0));
  CHECK_FALSE(r.degenerate);
  CHECK(r.n_pairs == 2);
  CHECK(r.p.names()[1] == "b");
}

TEST_CASE("identical winner and loser features are degenerate") {
  auto fm = random_features(5, 3, 1);
  fm.L = fm.W;
  const auto r = solve_weights(fm);
  CHECK(r.degenerate);
  CHECK(r.p.is_zero());
  CHECK(r.objective == 0.0);
  CHECK(r.p.names()[0] == "attr0");
  CHECK(solve_from_direction({1e-13, 0.0}, {}, 1).degenerate);
  CHECK_FALSE(solve_from_direction({1e-11, 0.0}, {}, 1).degenerate);
}

TEST_CASE("closed form agrees with the sphere search oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto fm = random_features(20, 4, seed);
    const auto r = solve_weights(fm);
    const auto q = oracle::sphere_search(r.d, seed);
    CHECK(oracle::angle_between(r.p.values(), q) <= 1e-3);
  }
}

TEST_CASE("single pair solves to the normalized row gap") {
  const auto fm = random_features(1, 5, 3);
  const auto r = solve_weights(fm);
  double norm = 0.0;
  for (std::size_t i = 0; i < 5; ++i) norm += std::pow(fm.W(0, i) - fm.L(0, i), 2);
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < 5; ++i) CHECK(r.p[i] == doctest::Approx((fm.W(0, i) - fm.L(0, i)) / norm));
}

TEST_CASE("swapping every pair negates the weights") {
  const auto fm = random_features(8, 4, 2);
  const auto a = solve_weights(fm);
  const auto b = solve_weights(fm.swapped());
  for (std::size_t i = 0; i < 4; ++i) CHECK(b.p[i] == -a.p[i]);
}

TEST_CASE("logistic baseline") {
  // Separable: the chosen row is larger on coordinate 0.
  FeatureMatrixPair fm;
  fm.W = Matrix(0, 2);
  fm.L = Matrix(0, 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int j = 0; j < 200; ++j) {
    const double a = g(rng), b = g(rng);
    fm.append("p", std::vector<double>{std::abs(a) + 0.5, b}, std::vector<double>{-std::abs(a) - 0.5, g(rng)});
  }
  const auto fit = solve_weights_logistic(fm);
  CHECK(fit.converged);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.direction[0] > 0.95);
  CHECK(fit.direction.norm() == doctest::Approx(1.0));

  FeatureMatrixPair zero;
  zero.W = Matrix(0, 2);
  zero.L = Matrix(0, 2);
  zero.append("z", std::vector<double>{0, 0}, std::vector<double>{0, 0});
  const auto z = solve_weights_logistic(zero);
  CHECK(z.degenerate);
  CHECK(z.direction.is_zero());
}

TEST_CASE("logistic optimum has a vanishing gradient") {
  const auto fm = random_features(30, 3, 9);
  LogisticOptions opts;
  const auto fit = solve_weights_logistic(fm, opts);
  REQUIRE(fit.converged);
  std::vector<double> grad(3, 0.0);
  auto accumulate = [&](std::span<const double> x, double y) {
    double z = 0.0;
    for (std::size_t i = 0; i < 3; ++i) z += fit.theta[i] * x[i];
    const double s = 1.0 / (1.0 + std::exp(-z));
    for (std::size_t i = 0; i < 3; ++i) grad[i] += (s - y) * x[i];
  };
  for (std::size_t j = 0; j < fm.n(); ++j) {
    accumulate(fm.W.row(j), 1.0);
    accumulate(fm.L.row(j), 0.0);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(grad[i] + opts.l2 * fit.theta[i]) < 1e-8);
}

TEST_CASE("selection orders by magnitude, ties by index") {
  const double s = 1.0 / std::sqrt(4.0);
  const WeightVector p({s, -s, s, -s}, {"a", "b", "c", "d"});
  const auto all = select_attributes(p, 4);
  CHECK(all.indices == std::vector<std::size_t>{0, 1, 2, 3});
  const WeightVector q({0.1, -0.7, 0.7, 0.1}, {"a", "b", "c", "d"});
  CHECK(select_attributes(q, 2).indices == std::vector<std::size_t>{1, 2});
  CHECK(select_attributes(q, 3).indices == std::vector<std::size_t>{1, 2, 0});
  CHECK_THROWS_AS(select_attributes(q, 0), InvalidArgument);
  CHECK_THROWS_AS(select_attributes(q, 5), InvalidArgument);
  const auto r = restrict_weights(q, select_attributes(q, 2));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(-std::sqrt(0.5)));
  CHECK(r[2] == doctest::Approx(std::sqrt(0.5)));
  CHECK(r.names() == q.names());
}

TEST_CASE("incremental updates equal the batch solve") {
  const auto catalog = catalog_k(6);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto fm = random_features(25, 6, 100 + seed);
    const auto rows = rows_of(fm);
    auto profile = UserProfile::fresh("u", catalog, 3);
    std::mt19937_64 rng(seed);
    std::size_t pos = 0;
    while (pos < rows.size()) {
      const std::size_t chunk = std::min<std::size_t>(1 + rng() % 5, rows.size() - pos);
      append_and_resolve(profile, std::span<const RewardRowPair>(rows).subspan(pos, chunk));
      pos += chunk;
    }
    const auto batch = solve_weights(fm, catalog.names());
    CHECK(profile.n_pairs == 25);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(profile.report.p[i] - batch.p[i]) <= 1e-12);
      CHECK(std::abs(profile.d[i] - batch.d[i]) <= 1e-12);
    }
    CHECK(profile.selected.indices == select_attributes(batch.p, 3).indices);
  }
}

TEST_CASE("a pair followed by its swap restores a fresh profile") {
  const auto catalog = catalog_k(4);
  const auto fm = random_features(1, 4, 5);
  auto rows = rows_of(fm);
  auto profile = UserProfile::fresh("u", catalog);
  CHECK(profile.subset_size == 4);
  append_and_resolve(profile, rows);
  CHECK(profile.n_pairs == 1);
  CHECK_FALSE(profile.report.degenerate);
  std::swap(rows[0].w_row, rows[0].l_row);
  append_and_resolve(profile, rows);
  CHECK(profile.d == std::vector<double>(4, 0.0));
  CHECK(profile.report.degenerate);
  CHECK(profile.selected.indices.empty());
}

TEST_CASE("fresh profiles and unit implicit preference") {
  const auto catalog = catalog_k(3);
  auto profile = UserProfile::fresh("u", catalog);
  CHECK(profile.unit_implicit_preference() == std::vector<double>(3, 0.0));
  CHECK(profile.report.degenerate);
  const auto fm = random_features(4, 3, 6);
  append_and_resolve(profile, rows_of(fm));
  const auto u = profile.unit_implicit_preference();
  const auto expect = unit_implicit_preference(fm);
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(expect[i]).epsilon(1e-14));
  CHECK(profile.updated_at_ms > 0);
  std::vector<RewardRowPair> bad{{{1.0}, {2.0}}};
  CHECK_THROWS_AS(append_and_resolve(profile, bad), InvalidArgument);
}
