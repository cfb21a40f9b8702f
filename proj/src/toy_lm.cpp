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


#include "drift/toy_lm.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace drift {

namespace {

constexpr std::uint64_t kBaseSalt = 0x6a09e667f3bcc909ULL;
constexpr std::uint64_t kCueSalt = 0xbb67ae8584caa73bULL;
constexpr std::uint64_t kPadToken = 0xffffffffULL;

double symmetric_unit(std::uint64_t bits) { return 2.0 * unit_interval(bits) - 1.0; }

std::vector<std::string> prompt_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-' || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

void ToyLmConfig::validate() const {
  if (vocab_size < 4) throw InvalidArgument("toy LM vocab_size must be >= 4");
  if (context_order < 1) throw InvalidArgument("toy LM context_order must be >= 1");
  if (eos_token && *eos_token >= vocab_size) {
    throw InvalidArgument("toy LM eos_token outside the vocabulary");
  }
}

std::string toy_tokenizer_id(std::size_t vocab_size) {
  return "toy-ws-v" + std::to_string(vocab_size);
}

ToyLm::ToyLm(ToyLmConfig config) : config_(std::move(config)) { config_.validate(); }

TokenizerSpec ToyLm::tokenizer() const {
  return {config_.vocab_size, toy_tokenizer_id(config_.vocab_size)};
}

std::string ToyLm::fingerprint() const {
  std::ostringstream os;
  os << "toy:v" << config_.vocab_size << ":o" << config_.context_order << ":s"
     << config_.seed;
  return os.str();
}

std::vector<TokenId> ToyLm::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    const std::string_view word = text.substr(i, j - i);
    std::uint64_t id = 0;
    bool literal = false;
    if (word.size() > 1 && word[0] == 't') {
      auto [ptr, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), id);
      literal = ec == std::errc() && ptr == word.data() + word.size() &&
                id < config_.vocab_size;
    }
    out.push_back(static_cast<TokenId>(literal ? id : fnv1a64(word) % config_.vocab_size));
    i = j;
  }
  return out;
}

std::string ToyLm::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += 't';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::vector<std::uint64_t> ToyLm::prompt_keys(std::string_view system_prompt) const {
  std::vector<std::uint64_t> keys;
  for (const auto& w : prompt_words(system_prompt)) keys.push_back(fnv1a64(w));
  // Summation order must not depend on word order.
  std::sort(keys.begin(), keys.end());
  return keys;
}

LogitVector ToyLm::logits_with_keys(std::span<const std::uint64_t> keys,
                                    std::span<const TokenId> context) const {
  std::uint64_t ctx = splitmix64(config_.seed ^ 0x3c6ef372fe94f82bULL);
  for (std::size_t i = 0; i < config_.context_order; ++i) {
    const std::size_t back = config_.context_order - i;
    const std::uint64_t tok =
        back <= context.size() ? context[context.size() - back] : kPadToken;
    ctx = splitmix64(ctx ^ tok);
  }

  LogitVector h;
  h.values.resize(config_.vocab_size);
  for (std::size_t v = 0; v < config_.vocab_size; ++v) {
    const std::uint64_t cell = splitmix64(ctx ^ splitmix64(v + 1));
    double total = kBaseScale * symmetric_unit(splitmix64(cell ^ kBaseSalt));
    for (std::uint64_t key : keys) {
      total += kCueScale * symmetric_unit(splitmix64(cell ^ splitmix64(key ^ kCueSalt)));
    }
    h.values[v] = 4.0 * std::tanh(total / 4.0);
  }
  return h;
}

LogitVector ToyLm::logits_for_context(std::string_view system_prompt,
                                      std::span<const TokenId> context) const {
  return logits_with_keys(prompt_keys(system_prompt), context);
}

ScoreResponse ToyLm::score(const ScoreRequest& req) const {
  auto cont = tokenize(req.continuation);
  if (cont.empty()) throw InvalidArgument("score: continuation is empty");
  const auto keys = prompt_keys(req.system_prompt);
  auto ctx = tokenize(req.prompt);
  ScoreResponse out;
  out.token_logprobs.reserve(cont.size());
  for (TokenId t : cont) {
    const auto h = logits_with_keys(keys, ctx);
    const double lp = log_softmax(h.values)[t];
    out.token_logprobs.push_back(lp);
    out.total_logprob += lp;
    ctx.push_back(t);
  }
  return out;
}

LogitVector ToyLm::next_logits(const LogitRequest& req) const {
  const auto vocab = config_.vocab_size;
  for (TokenId t : req.prefix) {
    if (t >= vocab) throw PreconditionError("next_logits: prefix token outside the vocabulary");
  }
  auto ctx = tokenize(req.prompt);
  ctx.insert(ctx.end(), req.prefix.begin(), req.prefix.end());
  return logits_with_keys(prompt_keys(req.system_prompt), ctx);
}

}  // namespace drift
