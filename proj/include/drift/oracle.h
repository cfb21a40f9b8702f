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

// Brute-force verifiers for the closed forms the engine relies on. They work
// on spaces small enough to enumerate and avoid the code paths they check.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "drift/core.h"

namespace drift::oracle {

struct Report {
  std::string check;
  std::uint64_t seed = 0;
  bool pass = false;
  double max_error = 0.0;
  std::string notes;

  // {"check", "seed", "pass", "max_error", "notes"}
  nlohmann::json to_json() const;
};

// pi*(y) = base(y) exp(r(y) / beta) / Z, with Z summed explicitly.
std::vector<double> rl_closed_form(std::span<const double> base, std::span<const double> reward,
                                   double beta);

// E_pi[r] - beta KL(pi || base).
double kl_regularized_objective(std::span<const double> pi, std::span<const double> base,
                                std::span<const double> reward, double beta);

double total_variation(std::span<const double> a, std::span<const double> b);

struct RlOptions {
  std::size_t perturbations = 10000;
  std::size_t ascent_starts = 4;
  double tv_tolerance = 1e-6;
  // Overrides the random beta when positive.
  double beta = 0.0;
  // Replace the random reward by a constant.
  bool constant_reward = false;
};

// Random base distribution, reward and beta over `vocab_size` outcomes.
// Checks the analytic optimum against random perturbations on the simplex and
// against gradient ascent (gradient projected onto the simplex tangent space
// in the pi-weighted metric) from random starts.
Report verify_rl_closed_form(std::size_t vocab_size, std::uint64_t seed, RlOptions options = {});

struct RewardIdentityOptions {
  bool zero_reward = false;
  double reward_shift = 0.0;
};

// Recovers r from (pi*_r, pi_r, beta, Z_r) and pairwise reward differences
// without Z_r.
Report verify_generative_reward_identity(std::size_t vocab_size, std::uint64_t seed,
                                         RewardIdentityOptions options = {});

// Maximizer of <d, q> over unit q by scanning `directions` random unit
// vectors and then derivative-free hill climbing on the sphere.
std::vector<double> sphere_search(std::span<const double> d, std::uint64_t seed,
                                  std::size_t directions = 10000);

double angle_between(std::span<const double> a, std::span<const double> b);

// Random d in R^k (or `d` itself when given), compared with the closed form
// d / |d| computed by the approximation module. Passes when the angle is at
// most `tolerance`.
Report verify_sphere_maximizer(std::size_t k, std::uint64_t seed, std::vector<double> d = {},
                               double tolerance = 1e-3);

// Explicit normalized product pi_llm * prod_i (pi_i / pi_base)^(p_i / beta),
// computed from probabilities by direct exponentiation.
std::vector<double> product_distribution(std::span<const double> h_llm,
                                         std::span<const double> h_base,
                                         const std::vector<std::vector<double>>& h_attrs,
                                         std::span<const double> p, double beta);

// Enumerates all vocab^horizon sequences over two toy LMs and compares the
// per-step drift process built from composite logits against the explicit
// product form. Reports (does not assert) the total-variation gap to the
// sequence-level tilted target; for horizon 1 the gap must vanish.
Report verify_sequence_level_composition(std::size_t vocab_size, std::size_t horizon,
                                         std::size_t k, std::uint64_t seed);

// The full suite at default sizes.
std::vector<Report> run_all(std::uint64_t seed);

}  // namespace drift::oracle
