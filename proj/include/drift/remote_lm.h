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
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "drift/lm_backend.h"

namespace httplib {
class Server;
}

namespace drift {

struct RemoteLmConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  int timeout_ms = 30000;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  // When unset, the tokenizer is discovered from the first /v1/logits reply.
  std::optional<TokenizerSpec> expected_tokenizer;
  std::optional<TokenId> eos_token;
  // Requests a batch call may keep in flight at once.
  std::size_t concurrency = 16;

  // DRIFT_LM_URL (required), DRIFT_LM_TIMEOUT_MS (default 30000).
  static RemoteLmConfig from_env();
};

// JSON-over-HTTP client:
//   POST /v1/score  {"system","prompt","continuation"}
//        -> {"token_logprobs": [float], "total_logprob": float}
//   POST /v1/logits {"system","prompt","prefix_tokens": [int]}
//        -> {"logits": [float], "vocab_size": int, "tokenizer_id": str}
// Every request carries an Idempotency-Key header that stays fixed across
// retries. Transport failures and 5xx replies are retried with exponential
// backoff up to max_attempts.
class RemoteLm : public LmBackend {
 public:
  explicit RemoteLm(RemoteLmConfig config);

  TokenizerSpec tokenizer() const override;
  std::string fingerprint() const override { return "remote:" + config_.base_url; }
  ScoreResponse score(const ScoreRequest& req) const override;
  LogitVector next_logits(const LogitRequest& req) const override;
  bool supports_next_logits() const override;
  std::optional<TokenId> eos_token() const override { return config_.eos_token; }
  std::size_t max_concurrency() const override { return config_.concurrency; }

  const RemoteLmConfig& config() const { return config_; }

 private:
  std::string post(const std::string& path, const std::string& body) const;
  void check_tokenizer(const TokenizerSpec& got) const;

  RemoteLmConfig config_;
  mutable std::atomic<std::uint64_t> request_counter_{0};
  mutable std::mutex tokenizer_mu_;
  mutable std::optional<TokenizerSpec> tokenizer_;
};

struct BackendServerOptions {
  // Added before every reply; used to emulate network latency.
  std::chrono::milliseconds latency{0};
  // A score-only server answers /v1/logits with 501.
  bool expose_logits = true;
};

// Registers /v1/score and /v1/logits on `server`, answering from `backend`.
void mount_backend_routes(httplib::Server& server, std::shared_ptr<const LmBackend> backend,
                          BackendServerOptions options = {});

}  // namespace drift
