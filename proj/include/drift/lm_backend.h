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

#include <atomic>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drift/core.h"

namespace drift {

struct ScoreRequest {
  std::string system_prompt;
  std::string prompt;
  std::string continuation;
};

struct ScoreResponse {
  std::vector<double> token_logprobs;  // nats, one per continuation token
  double total_logprob = 0.0;

  bool operator==(const ScoreResponse&) const = default;
};

// Throws CapabilityError if the response violates the log-probability
// contract (entries <= 0, total equal to the sum within 1e-9).
void validate_score(const ScoreResponse& r, std::string_view what);

struct LogitRequest {
  std::string system_prompt;
  std::string prompt;
  std::vector<TokenId> prefix;
};

// Failure of one element of a batched call. index() is the position of the
// first failing request; kind() is inherited from the underlying error.
class BatchError : public DriftError {
 public:
  BatchError(ErrorKind kind, std::size_t index, const std::string& what)
      : DriftError(kind, what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// A language model that can score continuations and emit next-token logits
// under a system prompt. Implementations must be safe to call concurrently.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual TokenizerSpec tokenizer() const = 0;
  // Identifies the model for feature caching.
  virtual std::string fingerprint() const = 0;
  virtual ScoreResponse score(const ScoreRequest& req) const = 0;
  virtual LogitVector next_logits(const LogitRequest& req) const = 0;

  virtual bool supports_next_logits() const { return true; }
  virtual std::optional<TokenId> eos_token() const { return std::nullopt; }
  // Text rendering of generated tokens; the default joins decimal ids.
  virtual std::string detokenize(std::span<const TokenId> tokens) const;
  // Upper bound on concurrent in-flight requests for batch calls.
  virtual std::size_t max_concurrency() const;

  // Order-preserving and element-wise identical to sequential calls.
  // Elements may run concurrently.
  std::vector<ScoreResponse> batch_score(std::span<const ScoreRequest> reqs) const;
  std::vector<LogitVector> batch_next_logits(std::span<const LogitRequest> reqs) const;
};

// Forwards to an inner backend and counts calls per endpoint.
class CountingBackend : public LmBackend {
 public:
  explicit CountingBackend(std::shared_ptr<const LmBackend> inner)
      : inner_(std::move(inner)) {}

  TokenizerSpec tokenizer() const override { return inner_->tokenizer(); }
  std::string fingerprint() const override { return inner_->fingerprint(); }
  ScoreResponse score(const ScoreRequest& req) const override;
  LogitVector next_logits(const LogitRequest& req) const override;
  bool supports_next_logits() const override { return inner_->supports_next_logits(); }
  std::optional<TokenId> eos_token() const override { return inner_->eos_token(); }
  std::string detokenize(std::span<const TokenId> t) const override {
    return inner_->detokenize(t);
  }
  std::size_t max_concurrency() const override { return inner_->max_concurrency(); }

  std::size_t score_calls() const { return score_calls_.load(); }
  std::size_t logit_calls() const { return logit_calls_.load(); }
  void reset() {
    score_calls_ = 0;
    logit_calls_ = 0;
  }

 private:
  std::shared_ptr<const LmBackend> inner_;
  mutable std::atomic<std::size_t> score_calls_{0};
  mutable std::atomic<std::size_t> logit_calls_{0};
};

}  // namespace drift
