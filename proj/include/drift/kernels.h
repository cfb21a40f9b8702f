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


#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version, used by the
// library, and a serial version under `reference` that the tests and the
// benchmark compare against. Parallel reductions use fixed-size blocks that
// are combined in block order, so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace drift::kernels {

// Below this many elements the OpenMP regions run single-threaded.
inline constexpr std::size_t kParallelThreshold = 1 << 13;
inline constexpr std::size_t kReductionBlock = 4096;

void log_softmax(std::span<const double> h, std::span<double> out);

// out = h_llm + correction, where
// correction = inv_beta * sum_i weights[i] * (h_attrs[i] - h_base).
// `correction` may be empty when the caller does not need it.
void composite_logits(std::span<const double> h_llm, std::span<const double> h_base,
                      std::span<const std::span<const double>> h_attrs,
                      std::span<const double> weights, double inv_beta,
                      std::span<double> correction, std::span<double> out);

namespace reference {

void log_softmax(std::span<const double> h, std::span<double> out);

void composite_logits(std::span<const double> h_llm, std::span<const double> h_base,
                      std::span<const std::span<const double>> h_attrs,
                      std::span<const double> weights, double inv_beta,
                      std::span<double> correction, std::span<double> out);

}  // namespace reference
}  // namespace drift::kernels
