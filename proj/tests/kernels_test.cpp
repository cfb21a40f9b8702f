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


#include "drift/kernels.h"

#include <doctest.h>
#include <omp.h>

#include <random>
#include <vector>

#include "test_util.h"

using namespace drift;

namespace {

struct CompositeCase {
  std::vector<double> h_llm, h_base;
  std::vector<std::vector<double>> attrs;
  std::vector<double> w;
};

CompositeCase make_case(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CompositeCase c{testing::random_vector(n, rng), testing::random_vector(n, rng), {}, testing::random_vector(k, rng, 1.0)};
  for (std::size_t i = 0; i < k; ++i) c.attrs.push_back(testing::random_vector(n, rng));
  return c;
}

}  // namespace

TEST_CASE("parallel log_softmax equals the serial reference") {
  for (std::size_t n : {1UL, 7UL, 4096UL, kernels::kParallelThreshold + 3, 100000UL}) {
    std::mt19937_64 rng(n);
    const auto h = testing::random_vector(n, rng, 20.0);
    std::vector<double> a(n), b(n);
    kernels::log_softmax(h, a);
    kernels::reference::log_softmax(h, b);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("parallel log_softmax does not depend on the thread count") {
  std::mt19937_64 rng(7);
  const auto h = testing::random_vector(65537, rng, 10.0);
  std::vector<double> one(h.size()), four(h.size());
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  kernels::log_softmax(h, one);
  omp_set_num_threads(4);
  kernels::log_softmax(h, four);
  omp_set_num_threads(saved);
  CHECK(one == four);
}

TEST_CASE("parallel composite_logits is bitwise equal to the reference") {
  for (std::size_t n : {5UL, kernels::kParallelThreshold + 1, 50000UL}) {
    for (std::size_t k : {0UL, 1UL, 8UL}) {
      const auto c = make_case(n, k, n * 31 + k);
      std::vector<std::span<const double>> views(c.attrs.begin(), c.attrs.end());
      std::vector<double> out_a(n), out_b(n), corr_a(n), corr_b(n);
      kernels::composite_logits(c.h_llm, c.h_base, views, c.w, 2.0, corr_a, out_a);
      kernels::reference::composite_logits(c.h_llm, c.h_base, views, c.w, 2.0, corr_b, out_b);
      CHECK(out_a == out_b);
      CHECK(corr_a == corr_b);
      std::vector<double> out_c(n);
      kernels::composite_logits(c.h_llm, c.h_base, views, c.w, 2.0, {}, out_c);
      CHECK(out_c == out_a);
    }
  }
}

TEST_CASE("composite_logits hand example") {
  const std::vector<double> llm{1.0, 2.0}, base{0.5, 0.5}, a1{1.5, 0.5}, a2{0.5, 2.5};
  const std::vector<std::span<const double>> attrs{a1, a2};
  const std::vector<double> w{0.6, 0.8};
  std::vector<double> out(2), corr(2);
  kernels::reference::composite_logits(llm, base, attrs, w, 2.0, corr, out);
  // corr = 2 * (0.6 * (1, 0) + 0.8 * (0, 2)) = (1.2, 3.2)
  CHECK(corr[0] == doctest::Approx(1.2));
  CHECK(corr[1] == doctest::Approx(3.2));
  CHECK(out[0] == doctest::Approx(2.2));
  CHECK(out[1] == doctest::Approx(5.2));
}
