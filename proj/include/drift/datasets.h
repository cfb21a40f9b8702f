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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drift/approximation.h"
#include "drift/core.h"
#include "drift/rewarding.h"
#include "drift/toy_lm.h"

namespace drift {

struct DatasetMeta {
  std::string source;
  std::string user_id;
  std::optional<WeightVector> p_star;  // ground truth, synthetic data only
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  DatasetMeta meta;

  // Every pair valid and pair_ids unique.
  void validate() const;
};

// One pair per line: {"pair_id": str, "prompt": str, "chosen": str, "rejected": str}.
// Errors name the 1-based line number. An empty file yields an empty dataset
// and a warning.
PreferenceDataset load_jsonl(const std::filesystem::path& path,
                             std::vector<std::string>* warnings = nullptr);
void save_jsonl(const PreferenceDataset& dataset, const std::filesystem::path& path);

struct SyntheticPersonaSpec {
  WeightVector p_star;
  double noise_flip_prob = 0.0;
  std::size_t n_pairs = 200;
  std::uint64_t seed = 0;
  std::size_t response_tokens = 3;

  void validate() const;
};

// Desk-scale persona: for each pair, two responses are sampled from the toy
// LM under the base prompt and the one with the larger <p_star, differential
// reward> wins, flipped with probability noise_flip_prob. Identical or tied
// candidates are redrawn up to 10 times, then the pair is skipped.
PreferenceDataset synthesize_persona_dataset(const SyntheticPersonaSpec& spec, const ToyLm& backend,
                                             const AttributeCatalog& catalog,
                                             std::span<const std::string> prompt_pool);

// Same base and attribute names; each attribute prompt is the base prompt
// followed by the words of its name, e.g. "You are an AI assistant: old
// fashioned." Attributes then share no prompt words beyond the base.
AttributeCatalog cue_catalog(const AttributeCatalog& catalog);

// Uniform direction on the unit sphere in R^k.
WeightVector random_unit_weights(std::size_t k, std::uint64_t seed,
                                 std::vector<std::string> names = {});
// Unit vector with exactly `support` nonzero entries at random positions.
// Magnitudes are bounded away from zero.
WeightVector random_sparse_weights(std::size_t k, std::size_t support, std::uint64_t seed,
                                   std::vector<std::string> names = {});

// n prompts of two to four "t<N>" words over the toy vocabulary.
std::vector<std::string> synthetic_prompt_pool(std::size_t n, std::uint64_t seed,
                                               std::size_t vocab_size);

// <p, w - l>; positive predicts the chosen response.
double preference_score(const WeightVector& p, std::span<const double> w_row,
                        std::span<const double> l_row);

// Fraction of rows with positive score; a zero score counts one half.
double pairwise_accuracy(const WeightVector& p, const FeatureMatrixPair& test);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic in (n_total, seed): a seeded permutation, train is its head
// and test its tail.
Split split_indices(std::size_t n_total, std::size_t n_train, std::size_t held_out,
                    std::uint64_t seed);

enum class Estimator { kDriftQp, kLogistic };

Estimator parse_estimator(std::string_view name);
std::string_view to_string(Estimator e);

using EstimatorFn =
    std::function<WeightVector(const FeatureMatrixPair& train, std::uint64_t seed)>;

EstimatorFn make_estimator(Estimator e);

struct EvalPoint {
  std::size_t n_train = 0;
  double accuracy = 0.0;
  double std = 0.0;
};

struct EvalCurve {
  std::vector<EvalPoint> points;
  std::size_t seeds_per_point = 0;
};

struct EvalOptions {
  // Test rows per split; 0 uses every row not needed for the largest n.
  std::size_t held_out = 0;
  std::uint64_t seed = 0;
};

EvalCurve kshot_eval(const FeatureMatrixPair& features, std::span<const std::size_t> ns,
                     std::size_t seeds_per_point, const EstimatorFn& estimator,
                     EvalOptions options = {});
EvalCurve kshot_eval(const FeatureMatrixPair& features, std::span<const std::size_t> ns,
                     std::size_t seeds_per_point, Estimator estimator, EvalOptions options = {});

struct ReductionPoint {
  std::size_t m = 0;
  double accuracy = 0.0;
  double std = 0.0;
};

// Fits the closed-form weights on n_train rows, keeps the top-m |p_i|,
// re-normalizes and scores held-out accuracy, for each m.
std::vector<ReductionPoint> attribute_reduction_eval(const FeatureMatrixPair& features,
                                                     std::span<const std::size_t> m_values,
                                                     std::size_t n_train,
                                                     std::size_t seeds_per_point,
                                                     EvalOptions options = {});

// CSV with header "n_train,accuracy,std".
void write_curve_csv(const EvalCurve& curve, const std::filesystem::path& path);
EvalCurve read_curve_csv(const std::filesystem::path& path);

// Static SVG line chart of one or more curves.
void write_curve_svg(const std::vector<std::pair<std::string, EvalCurve>>& curves,
                     const std::filesystem::path& path);

}  // namespace drift
