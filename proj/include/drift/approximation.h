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
#include <span>
#include <string>
#include <vector>

#include "drift/core.h"
#include "drift/rewarding.h"

namespace drift {

// Directions with norm at or below this are treated as "no preference".
inline constexpr double kDegenerateNorm = 1e-12;

struct SolveReport {
  WeightVector p;
  std::vector<double> d;  // column sums of W - L
  double objective = 0.0;  // <d, p>
  std::size_t n_pairs = 0;
  bool degenerate = false;
};

// Maximizer of <d, p> on the unit sphere: p = d / |d|, objective |d|.
// Returns the zero vector with degenerate = true when |d| <= kDegenerateNorm.
SolveReport solve_from_direction(std::vector<double> d, std::vector<std::string> names,
                                 std::size_t n_pairs);

// d = sum over rows of (W - L), accumulated row by row, then the closed form.
SolveReport solve_weights(const FeatureMatrixPair& fm,
                          std::vector<std::string> names = {});

struct LogisticOptions {
  double l2 = 1e-3;
  int max_iter = 100;
  double tolerance = 1e-10;  // on the Newton step norm
};

struct LogisticFit {
  WeightVector direction;     // theta / |theta|, or zero when degenerate
  std::vector<double> theta;  // raw coefficients
  bool converged = false;
  bool degenerate = false;
  int iterations = 0;
};

// Baseline: ridge-regularized logistic regression with W rows labeled 1 and
// L rows labeled 0, no intercept, fit by damped Newton steps.
LogisticFit solve_weights_logistic(const FeatureMatrixPair& fm, LogisticOptions options = {},
                                   std::vector<std::string> names = {});

struct AttributeSubset {
  std::vector<std::size_t> indices;  // sorted by |p_i| descending, ties by index

  std::size_t size() const { return indices.size(); }
};

inline constexpr std::size_t kDefaultSubsetSize = 7;

AttributeSubset select_attributes(const WeightVector& p, std::size_t m);

// Keeps the subset's weights, zeroes the rest and re-normalizes.
WeightVector restrict_weights(const WeightVector& p, const AttributeSubset& subset);

// Running state for one user: the direction d is a plain column sum, so new
// pairs fold in without touching earlier rows.
struct UserProfile {
  std::string user_id;
  std::string catalog_fp;
  std::vector<std::string> attribute_names;
  std::vector<double> d;
  std::size_t n_pairs = 0;
  SolveReport report;
  AttributeSubset selected;
  std::size_t subset_size = kDefaultSubsetSize;
  std::int64_t updated_at_ms = 0;

  static UserProfile fresh(std::string user_id, const AttributeCatalog& catalog,
                           std::size_t subset_size = kDefaultSubsetSize);
  // Per-attribute mean W - L, zeros for a fresh profile.
  std::vector<double> unit_implicit_preference() const;
};

// Adds sum(w - l) of the new rows to d and re-solves in O(k).
SolveReport append_and_resolve(UserProfile& profile, std::span<const RewardRowPair> new_rows);

}  // namespace drift
