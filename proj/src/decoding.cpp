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

#include <algorithm>
#include <cmath>
#include <future>
#include <json.hpp>
#include <numeric>

#include "drift/kernels.h"

namespace drift {

void SamplerSpec::validate() const {
  if (kind == Kind::kGreedy) return;
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("sampler temperature must be positive");
  }
  if (kind == Kind::kTopK && top_k < 1) throw InvalidArgument("top_k sampler needs k >= 1");
  if (kind == Kind::kTopP && !(top_p > 0.0 && top_p <= 1.0)) {
    throw InvalidArgument("top_p must lie in (0, 1]");
  }
}

std::string_view to_string(SamplerSpec::Kind kind) {
  switch (kind) {
    case SamplerSpec::Kind::kGreedy: return "greedy";
    case SamplerSpec::Kind::kTemperature: return "temperature";
    case SamplerSpec::Kind::kTopK: return "top_k";
    case SamplerSpec::Kind::kTopP: return "top_p";
  }
  return "unknown";
}

SamplerSpec::Kind parse_sampler_kind(std::string_view name) {
  if (name == "greedy") return SamplerSpec::Kind::kGreedy;
  if (name == "temperature") return SamplerSpec::Kind::kTemperature;
  if (name == "top_k") return SamplerSpec::Kind::kTopK;
  if (name == "top_p") return SamplerSpec::Kind::kTopP;
  throw InvalidArgument("unknown sampler kind '" + std::string(name) + "'");
}

void DriftConfig::validate(std::size_t k) const {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  sampler.validate();
  if (weights.size() != k) throw InvalidArgument("weight vector length does not match catalog");
  for (std::size_t i : subset.indices) {
    if (i >= k) throw InvalidArgument("subset index " + std::to_string(i) + " out of range");
  }
}

bool DriftConfig::unpersonalized() const {
  if (subset.indices.empty() || weights.is_zero()) return true;
  return std::all_of(subset.indices.begin(), subset.indices.end(),
                     [&](std::size_t i) { return weights[i] == 0.0; });
}

LogitVector composite_logits(const LogitVector& h_llm, const LogitVector& h_base,
                             std::span<const LogitVector> h_attrs, std::span<const double> p_sub,
                             Beta beta, LogitVector* correction) {
  const std::size_t n = h_llm.size();
  if (h_attrs.size() != p_sub.size()) {
    throw InvalidArgument("composite_logits: weights and attribute logits differ in count");
  }
  if (!h_attrs.empty() && h_base.size() != n) {
    throw InvalidArgument("composite_logits: base logits length mismatch");
  }
  std::vector<std::span<const double>> views;
  views.reserve(h_attrs.size());
  for (std::size_t i = 0; i < h_attrs.size(); ++i) {
    if (h_attrs[i].size() != n) {
      throw InvalidArgument("composite_logits: attribute " + std::to_string(i) +
                            " logits length mismatch");
    }
    views.push_back(h_attrs[i].view());
  }

  LogitVector out;
  out.values.resize(n);
  std::vector<double> corr(correction ? n : 0);
  kernels::composite_logits(h_llm.view(), h_base.view(), views, p_sub, 1.0 / beta.value(), corr,
                            out.values);

  for (std::size_t v = 0; v < n; ++v) {
    if (std::isfinite(out.values[v])) continue;
    double acc = 0.0;
    for (std::size_t i = 0; i < views.size(); ++i) {
      acc += p_sub[i] * (views[i][v] - h_base[v]);
      if (!std::isfinite(acc)) {
        throw NumericError("composite_logits: non-finite contribution from attribute " +
                           std::to_string(i) + " at token " + std::to_string(v));
      }
    }
    throw NumericError("composite_logits: non-finite result at token " + std::to_string(v));
  }
  if (correction) correction->values = std::move(corr);
  return out;
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(step) + 0x51ed270b27ULL));
}

TokenId sample_token(const LogitVector& h, const SamplerSpec& sampler, std::uint64_t rng_seed) {
  sampler.validate();
  const std::size_t n = h.size();
  if (n == 0) throw InvalidArgument("sample_token: empty logits");
  for (double v : h.values) {
    if (!std::isfinite(v)) throw NumericError("sample_token: non-finite logit");
  }

  if (sampler.kind == SamplerSpec::Kind::kGreedy) {
    return static_cast<TokenId>(std::max_element(h.values.begin(), h.values.end()) -
                                h.values.begin());
  }

  std::vector<double> scaled(n);
  for (std::size_t v = 0; v < n; ++v) scaled[v] = h.values[v] / sampler.temperature;

  // Candidate order: descending score, ascending index on ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scaled[a] > scaled[b]; });

  std::size_t keep = n;
  if (sampler.kind == SamplerSpec::Kind::kTopK ||
      (sampler.kind == SamplerSpec::Kind::kTopP && sampler.top_k > 0)) {
    keep = std::min(n, sampler.top_k);
  }
  if (sampler.kind == SamplerSpec::Kind::kTopP && sampler.top_p < 1.0) {
    std::vector<double> sorted(keep);
    for (std::size_t r = 0; r < keep; ++r) sorted[r] = scaled[order[r]];
    const auto probs = softmax(sorted);
    double cum = 0.0;
    for (std::size_t r = 0; r < keep; ++r) {
      cum += probs[r];
      if (cum >= sampler.top_p) {
        keep = r + 1;
        break;
      }
    }
  }

  std::vector<std::size_t> support(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(support.begin(), support.end());
  std::vector<double> kept(support.size());
  for (std::size_t r = 0; r < support.size(); ++r) kept[r] = scaled[support[r]];
  const auto probs = softmax(kept);

  const double u = unit_interval(splitmix64(rng_seed));
  double cum = 0.0;
  for (std::size_t r = 0; r < support.size(); ++r) {
    cum += probs[r];
    if (u < cum) return static_cast<TokenId>(support[r]);
  }
  return static_cast<TokenId>(support.back());
}

namespace {

StepTrace plain_step(LogitVector h_llm) {
  StepTrace tr;
  tr.correction.values.assign(h_llm.size(), 0.0);
  tr.h_drift = h_llm;
  tr.entropy_base_bits = entropy_bits(softmax(h_llm.values));
  tr.entropy_drift_bits = tr.entropy_base_bits;
  tr.h_llm = std::move(h_llm);
  return tr;
}

}  // namespace

Generation generate_base(const LmBackend& llm, const SamplerSpec& sampler,
                         std::size_t max_tokens, std::string_view prompt, std::uint64_t rng_seed) {
  sampler.validate();
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  const auto spec = llm.tokenizer();
  const auto eos = llm.eos_token();
  Generation gen;
  for (std::size_t t = 0; t < max_tokens; ++t) {
    try {
      auto h = llm.next_logits({"", std::string(prompt), gen.tokens});
      validate_logits(h, spec.vocab_size, "LLM logits");
      auto tr = plain_step(std::move(h));
      tr.chosen = sample_token(tr.h_drift, sampler, step_seed(rng_seed, t));
      gen.tokens.push_back(tr.chosen);
      gen.traces.push_back(std::move(tr));
    } catch (const DriftError& e) {
      gen.error = e.what();
      return gen;
    }
    if (eos && gen.tokens.back() == *eos) {
      gen.stopped_at_eos = true;
      break;
    }
  }
  return gen;
}

Generation generate(const LmBackend& llm, const LmBackend& slm, const AttributeCatalog& catalog,
                    const DriftConfig& config, std::string_view prompt, std::uint64_t rng_seed) {
  config.validate(catalog.size());
  const auto spec = llm.tokenizer();
  require_same_tokenizer(spec, slm.tokenizer(), "drift decoding");
  if (config.unpersonalized()) {
    return generate_base(llm, config.sampler, config.max_tokens, prompt, rng_seed);
  }
  if (!slm.supports_next_logits()) {
    throw PreconditionError("drift decoding: small-LM backend cannot return next-token logits");
  }

  const auto& idx = config.subset.indices;
  std::vector<double> p_sub(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) p_sub[r] = config.weights[idx[r]];

  std::vector<LogitRequest> slm_reqs;
  slm_reqs.push_back({catalog.base().system_prompt, std::string(prompt), {}});
  for (std::size_t i : idx) slm_reqs.push_back({catalog.attribute(i).system_prompt, std::string(prompt), {}});

  const auto eos = llm.eos_token();
  Generation gen;
  for (std::size_t t = 0; t < config.max_tokens; ++t) {
    try {
      for (auto& r : slm_reqs) r.prefix = gen.tokens;
      auto llm_future = std::async(std::launch::async, [&] {
        return llm.next_logits({"", std::string(prompt), gen.tokens});
      });
      std::vector<LogitVector> slm_logits;
      try {
        slm_logits = slm.batch_next_logits(slm_reqs);
      } catch (...) {
        llm_future.wait();
        throw;
      }
      StepTrace tr;
      tr.h_llm = llm_future.get();
      validate_logits(tr.h_llm, spec.vocab_size, "LLM logits");
      for (auto& h : slm_logits) validate_logits(h, spec.vocab_size, "small-LM logits");
      tr.h_base = std::move(slm_logits.front());
      tr.h_attrs.assign(std::make_move_iterator(slm_logits.begin() + 1),
                        std::make_move_iterator(slm_logits.end()));
      tr.h_drift = composite_logits(tr.h_llm, tr.h_base, tr.h_attrs, p_sub, config.beta,
                                    &tr.correction);
      tr.entropy_base_bits = entropy_bits(softmax(tr.h_llm.values));
      tr.entropy_drift_bits = entropy_bits(softmax(tr.h_drift.values));
      tr.chosen = sample_token(tr.h_drift, config.sampler, step_seed(rng_seed, t));
      gen.tokens.push_back(tr.chosen);
      gen.traces.push_back(std::move(tr));
    } catch (const DriftError& e) {
      gen.error = e.what();
      return gen;
    }
    if (eos && gen.tokens.back() == *eos) {
      gen.stopped_at_eos = true;
      break;
    }
  }
  return gen;
}

EntropyShift measure_entropy_shift(std::span<const StepTrace> traces) {
  if (traces.empty()) throw InvalidArgument("measure_entropy_shift: no traces");
  EntropyShift out;
  for (const auto& t : traces) {
    out.mean_base_bits += t.entropy_base_bits;
    out.mean_drift_bits += t.entropy_drift_bits;
  }
  out.mean_base_bits /= static_cast<double>(traces.size());
  out.mean_drift_bits /= static_cast<double>(traces.size());
  return out;
}

void write_trace_jsonl(std::ostream& out, std::span<const StepTrace> traces) {
  for (std::size_t s = 0; s < traces.size(); ++s) {
    const auto& t = traces[s];
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& h : t.h_attrs) attrs.push_back(h.values);
    out << nlohmann::json{{"step", s},
                          {"chosen", t.chosen},
                          {"entropy_base_bits", t.entropy_base_bits},
                          {"entropy_drift_bits", t.entropy_drift_bits},
                          {"h_llm", t.h_llm.values},
                          {"h_base", t.h_base.values},
                          {"h_attrs", attrs},
                          {"h_drift", t.h_drift.values}}
               .dump()
        << '\n';
  }
}

}  // namespace drift
