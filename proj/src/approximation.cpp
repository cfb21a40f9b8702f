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


#include "drift/approximation.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace drift {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::string> default_names(std::size_t k) {
  std::vector<std::string> names(k);
  for (std::size_t i = 0; i < k; ++i) names[i] = "attr" + std::to_string(i);
  return names;
}

// Solves A x = b for symmetric positive definite A (row-major, k x k).
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t k) {
  for (std::size_t j = 0; j < k; ++j) {
    double diag = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) diag -= a[j * k + p] * a[j * k + p];
    if (!(diag > 0.0)) throw NumericError("logistic Hessian is not positive definite");
    const double ljj = std::sqrt(diag);
    a[j * k + j] = ljj;
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * k + p] * a[j * k + p];
      a[i * k + j] = s / ljj;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= a[i * k + p] * b[p];
    b[i] = s / a[i * k + i];
  }
  for (std::size_t i = k; i-- > 0;) {
    double s = b[i];
    for (std::size_t p = i + 1; p < k; ++p) s -= a[p * k + i] * b[p];
    b[i] = s / a[i * k + i];
  }
  return b;
}

// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

SolveReport solve_from_direction(std::vector<double> d, std::vector<std::string> names,
                                 std::size_t n_pairs) {
  if (names.empty()) names = default_names(d.size());
  if (names.size() != d.size()) throw InvalidArgument("direction and names differ in length");
  for (double v : d) {
    if (!std::isfinite(v)) throw NumericError("non-finite preference direction");
  }
  SolveReport out;
  out.n_pairs = n_pairs;
  const double norm = std::sqrt(dot(d, d));
  if (norm <= kDegenerateNorm) {
    out.p = WeightVector::zero(std::move(names));
    out.degenerate = true;
    out.objective = 0.0;
  } else {
    std::vector<double> p(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) p[i] = d[i] / norm;
    out.p = WeightVector(std::move(p), std::move(names));
    out.objective = norm;
  }
  out.d = std::move(d);
  return out;
}

SolveReport solve_weights(const FeatureMatrixPair& fm, std::vector<std::string> names) {
  fm.validate();
  if (fm.n() == 0 || fm.k() == 0) throw InvalidArgument("solve_weights: need n >= 1 and k >= 1");
  std::vector<double> d(fm.k(), 0.0);
  for (std::size_t j = 0; j < fm.n(); ++j) {
    for (std::size_t i = 0; i < fm.k(); ++i) d[i] += fm.W(j, i) - fm.L(j, i);
  }
  return solve_from_direction(std::move(d), std::move(names), fm.n());
}

LogisticFit solve_weights_logistic(const FeatureMatrixPair& fm, LogisticOptions options,
                                   std::vector<std::string> names) {
  fm.validate();
  if (fm.n() == 0 || fm.k() == 0) throw InvalidArgument("solve_weights_logistic: empty features");
  if (options.l2 < 0.0) throw InvalidArgument("l2 must be non-negative");
  const std::size_t k = fm.k();
  if (names.empty()) names = default_names(k);

  // Rows of W carry label 1, rows of L label 0.
  auto objective = [&](std::span<const double> theta) {
    double f = 0.5 * options.l2 * dot(theta, theta);
    for (std::size_t j = 0; j < fm.n(); ++j) {
      f += softplus_neg(dot(theta, fm.W.row(j)));
      f += softplus_neg(-dot(theta, fm.L.row(j)));
    }
    return f;
  };

  LogisticFit fit;
  std::vector<double> theta(k, 0.0);
  double f = objective(theta);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    std::vector<double> grad(k, 0.0);
    std::vector<double> hess(k * k, 0.0);
    auto accumulate = [&](std::span<const double> x, double label) {
      const double s = sigmoid(dot(theta, x));
      const double r = s - label;
      const double w = s * (1.0 - s);
      for (std::size_t a = 0; a < k; ++a) {
        grad[a] += r * x[a];
        for (std::size_t b = 0; b <= a; ++b) hess[a * k + b] += w * x[a] * x[b];
      }
    };
    for (std::size_t j = 0; j < fm.n(); ++j) {
      accumulate(fm.W.row(j), 1.0);
      accumulate(fm.L.row(j), 0.0);
    }
    for (std::size_t a = 0; a < k; ++a) {
      grad[a] += options.l2 * theta[a];
      hess[a * k + a] += options.l2 + 1e-12;
      for (std::size_t b = 0; b < a; ++b) hess[b * k + a] = hess[a * k + b];
    }
    auto step = cholesky_solve(hess, grad, k);
    const double step_norm = std::sqrt(dot(step, step));
    fit.iterations = iter + 1;
    if (step_norm <= options.tolerance) {
      fit.converged = true;
      break;
    }
    // Backtracking on the regularized log-loss.
    double t = 1.0;
    std::vector<double> trial(k);
    double f_trial = f;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t a = 0; a < k; ++a) trial[a] = theta[a] - t * step[a];
      f_trial = objective(trial);
      if (f_trial <= f - 1e-4 * t * dot(grad, step)) break;
      t *= 0.5;
    }
    theta = trial;
    f = f_trial;
  }

  fit.theta = theta;
  const double norm = std::sqrt(dot(theta, theta));
  if (norm <= kDegenerateNorm) {
    fit.degenerate = true;
    fit.direction = WeightVector::zero(std::move(names));
  } else {
    std::vector<double> p(k);
    for (std::size_t a = 0; a < k; ++a) p[a] = theta[a] / norm;
    fit.direction = WeightVector(std::move(p), std::move(names));
  }
  return fit;
}

AttributeSubset select_attributes(const WeightVector& p, std::size_t m) {
  if (m < 1 || m > p.size()) {
    throw InvalidArgument("select_attributes: m must lie in [1, " + std::to_string(p.size()) + "]");
  }
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(p[a]) > std::abs(p[b]);
  });
  idx.resize(m);
  return {idx};
}

WeightVector restrict_weights(const WeightVector& p, const AttributeSubset& subset) {
  std::vector<double> kept(p.size(), 0.0);
  for (std::size_t i : subset.indices) kept.at(i) = p[i];
  const double norm = std::sqrt(dot(kept, kept));
  if (norm <= kDegenerateNorm) return WeightVector::zero(p.names());
  for (double& v : kept) v /= norm;
  return WeightVector(std::move(kept), p.names());
}

UserProfile UserProfile::fresh(std::string user_id, const AttributeCatalog& catalog,
                               std::size_t subset_size) {
  UserProfile u;
  u.user_id = std::move(user_id);
  u.catalog_fp = catalog.fingerprint();
  u.attribute_names = catalog.names();
  u.d.assign(catalog.size(), 0.0);
  u.subset_size = std::clamp<std::size_t>(subset_size, 1, catalog.size());
  u.report = solve_from_direction(u.d, u.attribute_names, 0);
  return u;
}

std::vector<double> UserProfile::unit_implicit_preference() const {
  std::vector<double> out(d.size(), 0.0);
  if (n_pairs == 0) return out;
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] / static_cast<double>(n_pairs);
  return out;
}

SolveReport append_and_resolve(UserProfile& profile, std::span<const RewardRowPair> new_rows) {
  const std::size_t k = profile.d.size();
  for (const auto& r : new_rows) {
    if (r.w_row.size() != k || r.l_row.size() != k) {
      throw InvalidArgument("append_and_resolve: row length does not match profile (k=" +
                            std::to_string(k) + ")");
    }
  }
  for (const auto& r : new_rows) {
    for (std::size_t i = 0; i < k; ++i) profile.d[i] += r.w_row[i] - r.l_row[i];
  }
  profile.n_pairs += new_rows.size();
  profile.report = solve_from_direction(profile.d, profile.attribute_names, profile.n_pairs);
  profile.selected = profile.report.degenerate
                         ? AttributeSubset{}
                         : select_attributes(profile.report.p, profile.subset_size);
  profile.updated_at_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
  return profile.report;
}

}  // namespace drift
