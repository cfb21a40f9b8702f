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

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace drift::kernels {

void log_softmax(std::span<const double> h, std::span<double> out) {
  const std::size_t n = h.size();
  if (n == 0) return;
  const bool par = n >= kParallelThreshold;

  double mx = -std::numeric_limits<double>::infinity();
#pragma omp parallel for reduction(max : mx) schedule(static) if (par)
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, h[i]);

  const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += std::exp(h[i] - mx);
    partial[b] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  const double lse = mx + std::log(total);

#pragma omp parallel for schedule(static) if (par)
  for (std::size_t i = 0; i < n; ++i) out[i] = h[i] - lse;
}

void composite_logits(std::span<const double> h_llm, std::span<const double> h_base,
                      std::span<const std::span<const double>> h_attrs,
                      std::span<const double> weights, double inv_beta,
                      std::span<double> correction, std::span<double> out) {
  const std::size_t n = h_llm.size();
  const std::size_t k = h_attrs.size();
  const bool keep = !correction.empty();
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
  for (std::size_t v = 0; v < n; ++v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += weights[i] * (h_attrs[i][v] - h_base[v]);
    const double c = inv_beta * acc;
    if (keep) correction[v] = c;
    out[v] = h_llm[v] + c;
  }
}

namespace reference {

void log_softmax(std::span<const double> h, std::span<double> out) {
  if (h.empty()) return;
  const double mx = *std::max_element(h.begin(), h.end());
  double total = 0.0;
  for (double v : h) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] - lse;
}

void composite_logits(std::span<const double> h_llm, std::span<const double> h_base,
                      std::span<const std::span<const double>> h_attrs,
                      std::span<const double> weights, double inv_beta,
                      std::span<double> correction, std::span<double> out) {
  const std::size_t n = h_llm.size();
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < h_attrs.size(); ++i) {
    for (std::size_t v = 0; v < n; ++v) acc[v] += weights[i] * (h_attrs[i][v] - h_base[v]);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const double c = inv_beta * acc[v];
    if (!correction.empty()) correction[v] = c;
    out[v] = h_llm[v] + c;
  }
}

}  // namespace reference
}  // namespace drift::kernels
