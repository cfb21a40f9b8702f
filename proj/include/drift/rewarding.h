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

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drift/core.h"
#include "drift/lm_backend.h"

namespace drift {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct RewardRowPair {
  std::vector<double> w_row;
  std::vector<double> l_row;
};

// Winner and loser differential rewards, one row per preference pair and one
// column per catalog attribute.
struct FeatureMatrixPair {
  Matrix W;
  Matrix L;
  std::vector<std::string> pair_ids;
  std::string catalog_fingerprint;

  std::size_t n() const { return W.rows(); }
  std::size_t k() const { return W.cols(); }

  // Shape and finiteness checks; throws InvalidArgument / NumericError.
  void validate() const;
  void append(std::string pair_id, std::span<const double> w_row, std::span<const double> l_row);
  // Rows [first, first + count) in the given order.
  FeatureMatrixPair select(std::span<const std::size_t> rows) const;
  FeatureMatrixPair swapped() const;
};

struct RewardOptions {
  // Divide each sequence log-probability by its token count before
  // differencing. Off by default.
  bool length_normalized = false;
};

// entry i = log pi(y | x, s_i) - log pi(y | x, s_0). The base prompt is
// scored once per call; all k+1 scorings go out as one batch.
std::vector<double> differential_reward(const LmBackend& backend,
                                        const AttributeCatalog& catalog,
                                        std::string_view prompt, std::string_view response,
                                        RewardOptions options = {});

// Persistent (pair_id, catalog_fp, backend_fp) -> reward rows store, one
// JSON record per line:
//   {"pair_id", "catalog_fp", "backend_fp", "w_row": [...], "l_row": [...]}
// Later records for the same key win. Writes are serialized.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path path);

  std::optional<RewardRowPair> find(const std::string& pair_id, const std::string& catalog_fp,
                                    const std::string& backend_fp) const;
  void put(const std::string& pair_id, const std::string& catalog_fp,
           const std::string& backend_fp, const RewardRowPair& rows);
  std::size_t size() const;

 private:
  static std::string key(const std::string& pair_id, const std::string& catalog_fp,
                         const std::string& backend_fp);

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, RewardRowPair> rows_;
};

struct BuildOptions {
  RewardOptions reward;
  // Drop failing pairs instead of failing the build.
  bool skip_failures = false;
  FeatureCache* cache = nullptr;
  // Fan out over pairs with OpenMP; false runs the serial reference loop.
  bool parallel = true;
};

struct FeatureBuild {
  FeatureMatrixPair features;
  std::vector<std::string> skipped;  // pair_ids dropped under skip_failures
};

FeatureBuild build_feature_matrices(const LmBackend& backend, const AttributeCatalog& catalog,
                                    std::span<const PreferencePair> dataset,
                                    const BuildOptions& options = {});

// Per-attribute mean of W - L over rows.
std::vector<double> unit_implicit_preference(const FeatureMatrixPair& fm);

}  // namespace drift
