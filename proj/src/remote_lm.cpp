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


#include "drift/remote_lm.h"

#include <httplib.h>

#include <cstdlib>
#include <json.hpp>
#include <thread>

namespace drift {

using nlohmann::json;

RemoteLmConfig RemoteLmConfig::from_env() {
  RemoteLmConfig cfg;
  const char* url = std::getenv("DRIFT_LM_URL");
  if (url == nullptr || *url == '\0') {
    throw InvalidArgument("DRIFT_LM_URL is not set");
  }
  cfg.base_url = url;
  if (const char* t = std::getenv("DRIFT_LM_TIMEOUT_MS"); t != nullptr && *t != '\0') {
    cfg.timeout_ms = std::atoi(t);
    if (cfg.timeout_ms <= 0) throw InvalidArgument("DRIFT_LM_TIMEOUT_MS must be positive");
  }
  return cfg;
}

RemoteLm::RemoteLm(RemoteLmConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw InvalidArgument("remote backend needs a base URL");
  if (config_.max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
  if (config_.expected_tokenizer) tokenizer_ = config_.expected_tokenizer;
}

std::string RemoteLm::post(const std::string& path, const std::string& body) const {
  const std::string key = hex64(fnv1a64(path + body)) + "-" +
                          std::to_string(request_counter_.fetch_add(1));
  httplib::Headers headers{{"Idempotency-Key", key}};
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client cli(config_.base_url);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto res = cli.Post(path, headers, body, "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) return res->body;
      if (res->status == 404 || res->status == 405 || res->status == 501) {
        throw CapabilityError(path + " not supported by " + config_.base_url + " (HTTP " +
                              std::to_string(res->status) + ")");
      }
      if (res->status < 500) {
        throw PreconditionError(path + " rejected (HTTP " + std::to_string(res->status) +
                                "): " + res->body);
      }
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(path + " failed after " + std::to_string(config_.max_attempts) +
                       " attempts: " + last_error);
}

void RemoteLm::check_tokenizer(const TokenizerSpec& got) const {
  std::lock_guard<std::mutex> lock(tokenizer_mu_);
  if (!tokenizer_) {
    tokenizer_ = got;
    return;
  }
  require_same_tokenizer(*tokenizer_, got, "remote /v1/logits");
}

TokenizerSpec RemoteLm::tokenizer() const {
  {
    std::lock_guard<std::mutex> lock(tokenizer_mu_);
    if (tokenizer_) return *tokenizer_;
  }
  next_logits({"", "", {}});
  std::lock_guard<std::mutex> lock(tokenizer_mu_);
  return *tokenizer_;
}

bool RemoteLm::supports_next_logits() const {
  try {
    next_logits({"", "", {}});
    return true;
  } catch (const CapabilityError&) {
    return false;
  }
}

ScoreResponse RemoteLm::score(const ScoreRequest& req) const {
  if (req.continuation.empty()) throw InvalidArgument("score: continuation is empty");
  json body = {{"system", req.system_prompt},
               {"prompt", req.prompt},
               {"continuation", req.continuation}};
  const auto reply = json::parse(post("/v1/score", body.dump()), nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) {
    throw TransportError("/v1/score returned malformed JSON");
  }
  if (!reply.contains("token_logprobs") || !reply["token_logprobs"].is_array()) {
    throw CapabilityError("/v1/score reply carries no token_logprobs");
  }
  ScoreResponse out;
  out.token_logprobs = reply["token_logprobs"].get<std::vector<double>>();
  if (reply.contains("total_logprob") && reply["total_logprob"].is_number()) {
    out.total_logprob = reply["total_logprob"].get<double>();
  } else {
    for (double lp : out.token_logprobs) out.total_logprob += lp;
  }
  validate_score(out, "/v1/score");
  return out;
}

LogitVector RemoteLm::next_logits(const LogitRequest& req) const {
  json body = {{"system", req.system_prompt},
               {"prompt", req.prompt},
               {"prefix_tokens", req.prefix}};
  const auto reply = json::parse(post("/v1/logits", body.dump()), nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("logits")) {
    throw CapabilityError("/v1/logits reply carries no logits");
  }
  TokenizerSpec got{reply.value("vocab_size", std::size_t{0}),
                    reply.value("tokenizer_id", std::string{})};
  check_tokenizer(got);
  LogitVector h{reply["logits"].get<std::vector<double>>()};
  validate_logits(h, got.vocab_size, "/v1/logits");
  return h;
}

void mount_backend_routes(httplib::Server& server, std::shared_ptr<const LmBackend> backend,
                          BackendServerOptions options) {
  auto reply_error = [](httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  };

  server.Post("/v1/score", [=](const httplib::Request& req, httplib::Response& res) {
    if (options.latency.count() > 0) std::this_thread::sleep_for(options.latency);
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "malformed JSON");
    try {
      ScoreRequest sr{body.value("system", std::string{}), body.value("prompt", std::string{}),
                      body.value("continuation", std::string{})};
      const auto out = backend->score(sr);
      res.set_content(
          json{{"token_logprobs", out.token_logprobs}, {"total_logprob", out.total_logprob}}
              .dump(),
          "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });

  server.Post("/v1/logits", [=](const httplib::Request& req, httplib::Response& res) {
    if (options.latency.count() > 0) std::this_thread::sleep_for(options.latency);
    if (!options.expose_logits) return reply_error(res, 501, "logits not available");
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "malformed JSON");
    try {
      LogitRequest lr{body.value("system", std::string{}), body.value("prompt", std::string{}),
                      body.value("prefix_tokens", std::vector<TokenId>{})};
      const auto h = backend->next_logits(lr);
      const auto spec = backend->tokenizer();
      res.set_content(json{{"logits", h.values},
                           {"vocab_size", spec.vocab_size},
                           {"tokenizer_id", spec.tokenizer_id}}
                          .dump(),
                      "application/json");
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });
}

}  // namespace drift
