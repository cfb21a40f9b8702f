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

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drift/approximation.h"
#include "drift/core.h"
#include "drift/lm_backend.h"

namespace drift {

struct SamplerSpec {
  enum class Kind { kGreedy, kTemperature, kTopK, kTopP };

  Kind kind = Kind::kTopP;
  double temperature = 1.0;
  std::size_t top_k = 0;
  double top_p = 0.9;

  void validate() const;

  static SamplerSpec greedy() { return {Kind::kGreedy}; }
  static SamplerSpec with_temperature(double t) { return {Kind::kTemperature, t}; }
  static SamplerSpec with_top_k(std::size_t k, double t = 1.0) { return {Kind::kTopK, t, k}; }
  static SamplerSpec with_top_p(double p, double t = 1.0) { return {Kind::kTopP, t, 0, p}; }
};

std::string_view to_string(SamplerSpec::Kind kind);
SamplerSpec::Kind parse_sampler_kind(std::string_view name);

inline constexpr std::size_t kDefaultMaxTokens = 500;

struct DriftConfig {
  Beta beta{0.5};
  WeightVector weights;    // over the full catalog
  AttributeSubset subset;  // catalog indices composed at each step
  SamplerSpec sampler;
  std::size_t max_tokens = kDefaultMaxTokens;

  void validate(std::size_t k) const;
  // True when no attribute contributes: zero weights or empty subset.
  bool unpersonalized() const;
};

struct StepTrace {
  LogitVector h_llm;
  LogitVector h_base;
  std::vector<LogitVector> h_attrs;  // one per subset attribute, subset order
  LogitVector correction;            // (1/beta) sum_i p_i (h_i - h_base)
  LogitVector h_drift;               // h_llm + correction
  TokenId chosen = 0;
  double entropy_base_bits = 0.0;   // of softmax(h_llm)
  double entropy_drift_bits = 0.0;  // of softmax(h_drift)
};

// h_llm + (1/beta) sum_i p_i (h_i - h_base). No normalization.
LogitVector composite_logits(const LogitVector& h_llm, const LogitVector& h_base,
                             std::span<const LogitVector> h_attrs, std::span<const double> p_sub,
                             Beta beta, LogitVector* correction = nullptr);

// Pipeline: temperature, then top-k, then top-p, then inverse-CDF draw with
// one uniform derived from `rng_seed`. Greedy returns the argmax, lowest
// index on ties. A top_p sampler with top_k > 0 applies both truncations.
TokenId sample_token(const LogitVector& h, const SamplerSpec& sampler, std::uint64_t rng_seed);

// Seed for step `step` of a generation seeded with `seed`.
std::uint64_t step_seed(std::uint64_t seed, std::size_t step);

struct Generation {
  std::vector<TokenId> tokens;
  std::vector<StepTrace> traces;
  bool stopped_at_eos = false;
  std::optional<std::string> error;  // set when a backend failed mid-way
};

// Autoregressive drift decoding. Per step: one next_logits call on `llm`
// (empty system prompt) and, unless the config is unpersonalized, m + 1
// concurrent calls on `slm` for the base prompt and each subset attribute.
// Throws PreconditionError before the first step if the backends disagree on
// the tokenizer or `slm` cannot return logits.
Generation generate(const LmBackend& llm, const LmBackend& slm, const AttributeCatalog& catalog,
                    const DriftConfig& config, std::string_view prompt, std::uint64_t rng_seed);

// Plain sampling from `llm` with the same per-step seeds as generate().
Generation generate_base(const LmBackend& llm, const SamplerSpec& sampler,
                         std::size_t max_tokens, std::string_view prompt, std::uint64_t rng_seed);

struct EntropyShift {
  double mean_base_bits = 0.0;
  double mean_drift_bits = 0.0;
};

EntropyShift measure_entropy_shift(std::span<const StepTrace> traces);

// One JSON object per line:
//   {"step", "chosen", "entropy_base_bits", "entropy_drift_bits",
//    "h_llm", "h_base", "h_attrs", "h_drift"}
void write_trace_jsonl(std::ostream& out, std::span<const StepTrace> traces);

}  // namespace drift
