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


#include "drift/lm_backend.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace drift {

void validate_score(const ScoreResponse& r, std::string_view what) {
  double sum = 0.0;
  for (double lp : r.token_logprobs) {
    if (!std::isfinite(lp) || lp > 1e-12) {
      throw CapabilityError(std::string(what) + ": token log-probability out of range");
    }
    sum += lp;
  }
  if (!std::isfinite(r.total_logprob) || std::abs(sum - r.total_logprob) > 1e-9) {
    throw CapabilityError(std::string(what) +
                          ": total_logprob disagrees with the token log-probabilities");
  }
}

std::string LmBackend::detokenize(std::span<const TokenId> tokens) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << tokens[i];
  }
  return os.str();
}

std::size_t LmBackend::max_concurrency() const {
  return static_cast<std::size_t>(omp_get_max_threads());
}

namespace {

// Runs fn(i) for i in [0, n) with up to `width` threads and rethrows the
// first failure (lowest index) as a BatchError.
template <typename Fn>
void run_batch(std::size_t n, std::size_t width, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const int threads = static_cast<int>(std::max<std::size_t>(1, std::min(n, width)));
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads > 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const DriftError& e) {
      throw BatchError(e.kind(), i,
                       "batch element " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw BatchError(ErrorKind::kTransport, i,
                       "batch element " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<ScoreResponse> LmBackend::batch_score(std::span<const ScoreRequest> reqs) const {
  if (reqs.empty()) throw InvalidArgument("batch_score: empty request list");
  std::vector<ScoreResponse> out(reqs.size());
  run_batch(reqs.size(), max_concurrency(), [&](std::size_t i) { out[i] = score(reqs[i]); });
  return out;
}

std::vector<LogitVector> LmBackend::batch_next_logits(std::span<const LogitRequest> reqs) const {
  if (reqs.empty()) throw InvalidArgument("batch_next_logits: empty request list");
  std::vector<LogitVector> out(reqs.size());
  run_batch(reqs.size(), max_concurrency(),
            [&](std::size_t i) { out[i] = next_logits(reqs[i]); });
  return out;
}

ScoreResponse CountingBackend::score(const ScoreRequest& req) const {
  ++score_calls_;
  return inner_->score(req);
}

LogitVector CountingBackend::next_logits(const LogitRequest& req) const {
  ++logit_calls_;
  return inner_->next_logits(req);
}

}  // namespace drift
