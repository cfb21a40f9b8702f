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

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace drift {

enum class ErrorKind {
  kInvalidArgument,
  kPrecondition,
  kTransport,
  kCapability,
  kNumeric,
};

// Base of every error raised by the library. kind() lets the service map
// failures onto HTTP status classes without RTTI ladders.
class DriftError : public std::runtime_error {
 public:
  DriftError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public DriftError {
 public:
  explicit InvalidArgument(const std::string& what)
      : DriftError(ErrorKind::kInvalidArgument, what) {}
};

class PreconditionError : public DriftError {
 public:
  explicit PreconditionError(const std::string& what)
      : DriftError(ErrorKind::kPrecondition, what) {}
};

class TransportError : public DriftError {
 public:
  explicit TransportError(const std::string& what)
      : DriftError(ErrorKind::kTransport, what) {}
};

class CapabilityError : public DriftError {
 public:
  explicit CapabilityError(const std::string& what)
      : DriftError(ErrorKind::kCapability, what) {}
};

class NumericError : public DriftError {
 public:
  explicit NumericError(const std::string& what)
      : DriftError(ErrorKind::kNumeric, what) {}
};

using TokenId = std::uint32_t;

struct TokenizerSpec {
  std::size_t vocab_size = 0;
  std::string tokenizer_id;

  bool operator==(const TokenizerSpec&) const = default;
};

// Throws PreconditionError when two backends or artifacts disagree on the
// tokenization scheme. `where` names the boundary for the diagnostic.
void require_same_tokenizer(const TokenizerSpec& a, const TokenizerSpec& b,
                            std::string_view where);

// Pre-softmax scores over a fixed vocabulary.
struct LogitVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const { return values; }
};

// Checks length == vocab_size and all entries finite.
void validate_logits(const LogitVector& h, std::size_t vocab_size,
                     std::string_view what);

struct AttributePrompt {
  std::string name;
  std::string system_prompt;
};

// Base prompt s_0 plus k attribute prompts s_1..s_k.
class AttributeCatalog {
 public:
  AttributeCatalog(AttributePrompt base, std::vector<AttributePrompt> attributes);

  const AttributePrompt& base() const { return base_; }
  const std::vector<AttributePrompt>& attributes() const { return attributes_; }
  const AttributePrompt& attribute(std::size_t i) const { return attributes_.at(i); }
  std::size_t size() const { return attributes_.size(); }
  std::vector<std::string> names() const;

  // Stable 64-bit FNV-1a digest over base and attribute (name, prompt) pairs,
  // rendered as 16 hex digits.
  const std::string& fingerprint() const { return fingerprint_; }

  // First `k` attributes, same base.
  AttributeCatalog prefix(std::size_t k) const;

  // Base prompt plus the 41 differential attribute prompts used for
  // zero-shot rewarding.
  static AttributeCatalog standard();

 private:
  AttributePrompt base_;
  std::vector<AttributePrompt> attributes_;
  std::string fingerprint_;
};

struct PreferencePair {
  std::string pair_id;
  std::string prompt;
  std::string chosen;
  std::string rejected;

  // Throws InvalidArgument on empty fields or chosen == rejected.
  void validate() const;
  PreferencePair swapped() const;
};

// Attribute weights p. Either unit-norm or the explicit all-zero vector.
class WeightVector {
 public:
  WeightVector() = default;
  WeightVector(std::vector<double> values, std::vector<std::string> names);

  static WeightVector zero(std::vector<std::string> names);

  const std::vector<double>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  bool is_zero() const;
  double norm() const;

 private:
  std::vector<double> values_;
  std::vector<std::string> names_;
};

inline constexpr double kUnitNormTolerance = 1e-9;

// KL-regularization strength; must be strictly positive.
class Beta {
 public:
  explicit Beta(double value = 0.5);
  double value() const { return value_; }

 private:
  double value_;
};

std::vector<double> log_softmax(std::span<const double> h);
std::vector<double> softmax(std::span<const double> h);

// Shannon entropy in bits, 0 log 0 := 0.
double entropy_bits(std::span<const double> dist);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);
std::string hex64(std::uint64_t v);

// Uniform double in [0, 1) from 53 high bits of `bits`.
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace drift
