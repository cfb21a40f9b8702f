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

#include "drift/core.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "drift/kernels.h"

namespace drift {

void require_same_tokenizer(const TokenizerSpec& a, const TokenizerSpec& b,
                            std::string_view where) {
  if (a == b) return;
  std::ostringstream os;
  os << where << ": tokenizer mismatch (" << a.tokenizer_id << "/" << a.vocab_size
     << " vs " << b.tokenizer_id << "/" << b.vocab_size << ")";
  throw PreconditionError(os.str());
}

void validate_logits(const LogitVector& h, std::size_t vocab_size,
                     std::string_view what) {
  if (h.size() != vocab_size) {
    std::ostringstream os;
    os << what << ": expected " << vocab_size << " logits, got " << h.size();
    throw PreconditionError(os.str());
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!std::isfinite(h.values[i])) {
      std::ostringstream os;
      os << what << ": non-finite logit at index " << i;
      throw NumericError(os.str());
    }
  }
}

AttributeCatalog::AttributeCatalog(AttributePrompt base,
                                   std::vector<AttributePrompt> attributes)
    : base_(std::move(base)), attributes_(std::move(attributes)) {
  if (attributes_.empty()) {
    throw InvalidArgument("attribute catalog needs at least one attribute");
  }
  std::set<std::string> seen;
  auto check = [&](const AttributePrompt& a) {
    if (a.name.empty()) throw InvalidArgument("attribute name is empty");
    if (a.system_prompt.empty()) {
      throw InvalidArgument("attribute '" + a.name + "' has an empty system prompt");
    }
    if (!seen.insert(a.name).second) {
      throw InvalidArgument("duplicate attribute name '" + a.name + "'");
    }
  };
  check(base_);
  for (const auto& a : attributes_) check(a);

  std::string blob;
  auto append = [&blob](const AttributePrompt& a) {
    blob += a.name;
    blob.push_back('\x1f');
    blob += a.system_prompt;
    blob.push_back('\x1e');
  };
  append(base_);
  for (const auto& a : attributes_) append(a);
  fingerprint_ = hex64(fnv1a64(blob));
}

std::vector<std::string> AttributeCatalog::names() const {
  std::vector<std::string> out;
  out.reserve(attributes_.size());
  for (const auto& a : attributes_) out.push_back(a.name);
  return out;
}

AttributeCatalog AttributeCatalog::prefix(std::size_t k) const {
  if (k == 0 || k > attributes_.size()) {
    throw InvalidArgument("catalog prefix size out of range");
  }
  return AttributeCatalog(base_, {attributes_.begin(), attributes_.begin() + k});
}

AttributeCatalog AttributeCatalog::standard() {
  return AttributeCatalog(
      {"base", "You are an AI assistant."},
      {
          {"formal", "You are an AI assistant with a formal tone."},
          {"concise", "You are an AI assistant with a concise response rather than verbosity."},
          {"vivid", "You are an AI assistant using rhetorical devices."},
          {"modest", "You are a modest and polite AI assistant."},
          {"engineer", "You are an AI assistant with expertise in engineering."},
          {"persuasive", "You are a persuasive AI assistant."},
          {"emotion", "You are an emotional AI assistant."},
          {"humor", "You are a humorous AI assistant."},
          {"energy", "You are an energetic AI assistant."},
          {"code", "You are an AI assistant with expertise in computer science."},
          {"easy", "You are an AI assistant using easy-to-understand words."},
          {"direct", "You are an AI assistant with a firm and directive tone."},
          {"social", "You are an AI assistant with expertise in sociology."},
          {"western", "You are an AI assistant with western cultures."},
          {"eastern", "You are an AI assistant with eastern cultures."},
          {"respect", "You are a respectful AI assistant."},
          {"internet_slang", "You are an AI assistant that communicates using internet slang."},
          {"proverb", "You are an AI assistant that communicates using proverbs."},
          {"critical", "You are an AI assistant that enjoys being critical and argumentative."},
          {"vague", "You are an AI assistant that enjoys speaking indirectly and ambiguously."},
          {"creative", "You are a creative AI assistant."},
          {"analytic", "You are an analytic AI assistant."},
          {"empathetic", "You are an empathetic AI assistant."},
          {"sycophant", "You are a sycophant AI assistant."},
          {"old_fashioned", "You are an AI assistant using old-fashioned English."},
          {"meritocratic", "You are a meritocratic AI assistant."},
          {"myopic", "You are a myopic AI assistant."},
          {"principled", "You are an AI assistant that upholds principles and rules above all else."},
          {"hedonist", "You are an AI assistant that prioritizes maximizing pleasure and joy while minimizing pain and discomfort."},
          {"utilitarian", "You are an AI assistant that prioritizes the greatest good for the greatest number of people."},
          {"realist", "You are an AI assistant that focuses on practical, realistic, and actionable advice."},
          {"pessimistic", "You are an AI assistant that views situations through a skeptical or cautious perspective."},
          {"storyteller", "You are an AI assistant that loves explaining things through stories and anecdotes."},
          {"flexible", "You are an AI assistant that values flexibility over strict adherence to principles."},
          {"spontaneous", "You are an AI assistant that enjoys handling tasks spontaneously without making plans."},
          {"collectivist", "You are an AI assistant that prioritizes the group over the individual."},
          {"individualistic", "You are an AI assistant that prioritizes the individual over the group."},
          {"exclamatory", "You are an AI assistant that enjoys using exclamations frequently."},
          {"conspiracy", "You are an AI assistant that enjoys discussing conspiracy theories."},
          {"tech_industry_priority", "You are an AI assistant that prioritizes technological and industrial advancement above all else."},
          {"eco_friendly", "You are an AI assistant that loves and protects the environment."},
      });
}

void PreferencePair::validate() const {
  if (pair_id.empty()) throw InvalidArgument("preference pair has an empty pair_id");
  if (prompt.empty()) throw InvalidArgument("pair '" + pair_id + "': empty prompt");
  if (chosen.empty()) throw InvalidArgument("pair '" + pair_id + "': empty chosen response");
  if (rejected.empty()) throw InvalidArgument("pair '" + pair_id + "': empty rejected response");
  if (chosen == rejected) {
    throw InvalidArgument("pair '" + pair_id + "': chosen and rejected are identical");
  }
}

PreferencePair PreferencePair::swapped() const {
  return {pair_id, prompt, rejected, chosen};
}

WeightVector::WeightVector(std::vector<double> values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (!names_.empty() && names_.size() != values_.size()) {
    throw InvalidArgument("weight vector and name list differ in length");
  }
  if (!is_zero() && std::abs(norm() - 1.0) > kUnitNormTolerance) {
    throw InvalidArgument("weight vector must be unit-norm or all zero");
  }
}

WeightVector WeightVector::zero(std::vector<std::string> names) {
  WeightVector w;
  w.values_.assign(names.size(), 0.0);
  w.names_ = std::move(names);
  return w;
}

bool WeightVector::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

double WeightVector::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

Beta::Beta(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidArgument("beta must be a finite positive number");
  }
}

std::vector<double> log_softmax(std::span<const double> h) {
  for (double v : h) {
    if (!std::isfinite(v)) throw NumericError("log_softmax: non-finite input");
  }
  std::vector<double> out(h.size());
  kernels::log_softmax(h, out);
  return out;
}

std::vector<double> softmax(std::span<const double> h) {
  auto out = log_softmax(h);
  for (double& v : out) v = std::exp(v);
  return out;
}

double entropy_bits(std::span<const double> dist) {
  double total = 0.0;
  for (double q : dist) {
    if (!(q >= 0.0) || !std::isfinite(q)) {
      throw InvalidArgument("entropy_bits: entries must be finite and non-negative");
    }
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgument("entropy_bits: distribution does not sum to 1");
  }
  double h = 0.0;
  for (double q : dist) {
    if (q > 0.0) h -= q * std::log2(q);
  }
  return std::max(h, 0.0);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace drift
