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
#include <string>
#include <string_view>
#include <vector>

#include "drift/lm_backend.h"

namespace drift {

struct ToyLmConfig {
  std::size_t vocab_size = 64;
  std::size_t context_order = 2;
  std::uint64_t seed = 0;
  std::optional<TokenId> eos_token;

  void validate() const;
};

// Deterministic synthetic language model over a small vocabulary.
//
// Text is tokenized on whitespace; a word of the form "t<N>" with N below the
// vocabulary size maps to token N, any other word to an FNV hash modulo the
// vocabulary. Detokenization emits "t<N>" words, so generated text
// round-trips.
//
// The logit for token v given (system prompt, last `context_order` tokens) is
//
//   4 * tanh((g(ctx, v) + sum_w c(w, ctx, v)) / 4)
//
// where g and c are keyed pseudo-random functions of the seed, uniform on
// [-kBaseScale, kBaseScale] and [-kCueScale, kCueScale]. The sum runs over
// the lower-cased alphanumeric words of the system prompt, so a prompt that
// extends another by a cue word perturbs that prompt's logits by the cue's
// term alone.
class ToyLm : public LmBackend {
 public:
  static constexpr double kBaseScale = 2.5;
  static constexpr double kCueScale = 1.0;

  explicit ToyLm(ToyLmConfig config);

  const ToyLmConfig& config() const { return config_; }

  TokenizerSpec tokenizer() const override;
  std::string fingerprint() const override;
  ScoreResponse score(const ScoreRequest& req) const override;
  LogitVector next_logits(const LogitRequest& req) const override;
  std::optional<TokenId> eos_token() const override { return config_.eos_token; }
  std::string detokenize(std::span<const TokenId> tokens) const override;

  std::vector<TokenId> tokenize(std::string_view text) const;

  // Logits for an explicit token context; exposed for enumeration oracles.
  LogitVector logits_for_context(std::string_view system_prompt,
                                 std::span<const TokenId> context) const;

 private:
  std::vector<std::uint64_t> prompt_keys(std::string_view system_prompt) const;
  LogitVector logits_with_keys(std::span<const std::uint64_t> keys,
                               std::span<const TokenId> context) const;

  ToyLmConfig config_;
};

std::string toy_tokenizer_id(std::size_t vocab_size);

}  // namespace drift
