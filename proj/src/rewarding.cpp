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


#include "drift/rewarding.h"

#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>

namespace drift {

using nlohmann::json;

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw InvalidArgument("matrix row length mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void FeatureMatrixPair::validate() const {
  if (W.rows() != L.rows() || W.cols() != L.cols()) {
    throw InvalidArgument("W and L differ in shape");
  }
  if (pair_ids.size() != W.rows()) throw InvalidArgument("pair_ids do not align with rows");
  for (std::size_t r = 0; r < W.rows(); ++r) {
    for (std::size_t c = 0; c < W.cols(); ++c) {
      if (!std::isfinite(W(r, c)) || !std::isfinite(L(r, c))) {
        throw NumericError("non-finite feature in row " + std::to_string(r));
      }
    }
  }
}

void FeatureMatrixPair::append(std::string pair_id, std::span<const double> w_row,
                               std::span<const double> l_row) {
  if (w_row.size() != l_row.size()) throw InvalidArgument("w_row and l_row differ in length");
  W.append_row(w_row);
  L.append_row(l_row);
  pair_ids.push_back(std::move(pair_id));
}

FeatureMatrixPair FeatureMatrixPair::select(std::span<const std::size_t> rows) const {
  FeatureMatrixPair out;
  out.catalog_fingerprint = catalog_fingerprint;
  for (std::size_t r : rows) {
    if (r >= n()) throw InvalidArgument("select: row " + std::to_string(r) + " out of range");
    out.append(pair_ids[r], W.row(r), L.row(r));
  }
  if (rows.empty()) {
    out.W = Matrix(0, k());
    out.L = Matrix(0, k());
  }
  return out;
}

FeatureMatrixPair FeatureMatrixPair::swapped() const {
  FeatureMatrixPair out = *this;
  std::swap(out.W, out.L);
  return out;
}

std::vector<double> differential_reward(const LmBackend& backend,
                                        const AttributeCatalog& catalog,
                                        std::string_view prompt, std::string_view response,
                                        RewardOptions options) {
  const std::size_t k = catalog.size();
  std::vector<ScoreRequest> reqs;
  reqs.reserve(k + 1);
  reqs.push_back({catalog.base().system_prompt, std::string(prompt), std::string(response)});
  for (const auto& a : catalog.attributes()) {
    reqs.push_back({a.system_prompt, std::string(prompt), std::string(response)});
  }

  std::vector<ScoreResponse> scores;
  try {
    scores = backend.batch_score(reqs);
  } catch (const BatchError& e) {
    const auto& name = e.index() == 0 ? catalog.base().name : catalog.attribute(e.index() - 1).name;
    throw DriftError(e.kind(), "attribute '" + name + "': " + e.what());
  }

  auto value = [&](const ScoreResponse& s) {
    if (!options.length_normalized) return s.total_logprob;
    return s.total_logprob / static_cast<double>(std::max<std::size_t>(1, s.token_logprobs.size()));
  };
  const double base = value(scores[0]);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = value(scores[i + 1]) - base;
  return out;
}

FeatureCache::FeatureCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw InvalidArgument(path_.string() + ":" + std::to_string(lineno) +
                            ": malformed cache record");
    }
    rows_[key(j.at("pair_id"), j.at("catalog_fp"), j.at("backend_fp"))] =
        RewardRowPair{j.at("w_row").get<std::vector<double>>(),
                      j.at("l_row").get<std::vector<double>>()};
  }
}

std::string FeatureCache::key(const std::string& pair_id, const std::string& catalog_fp,
                              const std::string& backend_fp) {
  return pair_id + '\x1f' + catalog_fp + '\x1f' + backend_fp;
}

std::optional<RewardRowPair> FeatureCache::find(const std::string& pair_id,
                                                const std::string& catalog_fp,
                                                const std::string& backend_fp) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = rows_.find(key(pair_id, catalog_fp, backend_fp));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

void FeatureCache::put(const std::string& pair_id, const std::string& catalog_fp,
                       const std::string& backend_fp, const RewardRowPair& rows) {
  std::lock_guard<std::mutex> lock(mu_);
  rows_[key(pair_id, catalog_fp, backend_fp)] = rows;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  out << json{{"pair_id", pair_id},
              {"catalog_fp", catalog_fp},
              {"backend_fp", backend_fp},
              {"w_row", rows.w_row},
              {"l_row", rows.l_row}}
             .dump()
      << '\n';
  if (!out) throw DriftError(ErrorKind::kPrecondition, "cannot write feature cache " + path_.string());
}

std::size_t FeatureCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return rows_.size();
}

FeatureBuild build_feature_matrices(const LmBackend& backend, const AttributeCatalog& catalog,
                                    std::span<const PreferencePair> dataset,
                                    const BuildOptions& options) {
  if (dataset.empty()) throw InvalidArgument("build_feature_matrices: empty dataset");
  for (const auto& p : dataset) p.validate();

  const std::size_t n = dataset.size();
  const std::string backend_fp =
      backend.fingerprint() + (options.reward.length_normalized ? ":lennorm" : "");
  std::vector<RewardRowPair> rows(n);
  std::vector<std::string> errors(n);
  std::vector<char> failed(n, 0);
  std::vector<ErrorKind> kinds(n, ErrorKind::kTransport);

  auto compute = [&](std::size_t j) {
    const auto& pair = dataset[j];
    try {
      if (options.cache) {
        if (auto hit = options.cache->find(pair.pair_id, catalog.fingerprint(), backend_fp)) {
          rows[j] = std::move(*hit);
          return;
        }
      }
      rows[j].w_row = differential_reward(backend, catalog, pair.prompt, pair.chosen, options.reward);
      rows[j].l_row = differential_reward(backend, catalog, pair.prompt, pair.rejected, options.reward);
      if (options.cache) options.cache->put(pair.pair_id, catalog.fingerprint(), backend_fp, rows[j]);
    } catch (const DriftError& e) {
      failed[j] = 1;
      kinds[j] = e.kind();
      errors[j] = e.what();
    } catch (const std::exception& e) {
      failed[j] = 1;
      errors[j] = e.what();
    }
  };

  if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t j = 0; j < n; ++j) compute(j);
  } else {
    for (std::size_t j = 0; j < n; ++j) compute(j);
  }

  FeatureBuild out;
  out.features.catalog_fingerprint = catalog.fingerprint();
  out.features.W = Matrix(0, catalog.size());
  out.features.L = Matrix(0, catalog.size());
  std::string failures;
  std::optional<ErrorKind> first_kind;
  for (std::size_t j = 0; j < n; ++j) {
    if (failed[j]) {
      out.skipped.push_back(dataset[j].pair_id);
      if (!first_kind) first_kind = kinds[j];
      failures += (failures.empty() ? "" : "; ") + dataset[j].pair_id + " (" + errors[j] + ")";
      continue;
    }
    out.features.append(dataset[j].pair_id, rows[j].w_row, rows[j].l_row);
  }
  if (!out.skipped.empty() && !options.skip_failures) {
    throw DriftError(*first_kind, "feature build failed for pairs: " + failures);
  }
  return out;
}

std::vector<double> unit_implicit_preference(const FeatureMatrixPair& fm) {
  fm.validate();
  if (fm.n() == 0) throw InvalidArgument("unit_implicit_preference: empty feature matrices");
  std::vector<double> sum(fm.k(), 0.0);
  for (std::size_t j = 0; j < fm.n(); ++j) {
    for (std::size_t i = 0; i < fm.k(); ++i) sum[i] += fm.W(j, i) - fm.L(j, i);
  }
  for (double& s : sum) s /= static_cast<double>(fm.n());
  return sum;
}

}  // namespace drift
