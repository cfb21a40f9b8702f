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


#include "drift/oracle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "drift/approximation.h"
#include "drift/decoding.h"
#include "drift/toy_lm.h"

namespace drift::oracle {

namespace {

Report make_report(std::string check, std::uint64_t seed) {
  Report rep;
  rep.check = std::move(check);
  rep.seed = seed;
  return rep;
}

std::vector<double> normalize(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
  return v;
}

std::vector<double> random_simplex_point(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = -std::log(u(rng));
  return normalize(std::move(v));
}

std::vector<double> random_distribution(std::size_t n, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<double> v(n);
  for (double& x : v) x = std::exp(g(rng));
  return normalize(std::move(v));
}

// Direct softmax: exp of raw logits divided by their sum, no log-space path.
std::vector<double> direct_softmax(std::span<const double> h) {
  const double mx = *std::max_element(h.begin(), h.end());
  std::vector<double> v(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) v[i] = std::exp(h[i] - mx);
  return normalize(std::move(v));
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

nlohmann::json Report::to_json() const {
  return {{"check", check}, {"seed", seed}, {"pass", pass}, {"max_error", max_error}, {"notes", notes}};
}

std::vector<double> rl_closed_form(std::span<const double> base, std::span<const double> reward,
                                   double beta) {
  std::vector<double> tilted(base.size());
  double z = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    tilted[i] = base[i] * std::exp(reward[i] / beta);
    z += tilted[i];
  }
  for (double& t : tilted) t /= z;
  return tilted;
}

double kl_regularized_objective(std::span<const double> pi, std::span<const double> base,
                                std::span<const double> reward, double beta) {
  double value = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    value += pi[i] * reward[i];
    if (pi[i] > 0.0) kl += pi[i] * std::log(pi[i] / base[i]);
  }
  return value - beta * kl;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

constexpr double kObjectiveSlack = 1e-12;

Report verify_rl_closed_form(std::size_t vocab_size, std::uint64_t seed, RlOptions options) {
  Report rep = make_report("rl_closed_form", seed);
  if (vocab_size < 2 || vocab_size > 16) {
    rep.notes = "vocab_size must lie in [2, 16]";
    return rep;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::uniform_real_distribution<double> beta_dist(0.2, 2.0);

  const auto base = random_distribution(vocab_size, 1.0, rng);
  std::vector<double> reward(vocab_size);
  const double c = unif(rng);
  for (double& r : reward) r = options.constant_reward ? c : unif(rng);
  const double beta = options.beta > 0.0 ? options.beta : beta_dist(rng);

  const auto optimum = rl_closed_form(base, reward, beta);
  const double best = kl_regularized_objective(optimum, base, reward, beta);

  // Perturbations: multiplicative noise at log-uniform scales, plus uniform
  // random points of the simplex.
  std::size_t beaten = 0;
  std::uniform_real_distribution<double> log_scale(std::log(1e-3), std::log(2.0));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < options.perturbations; ++t) {
    std::vector<double> q;
    if (t % 10 == 9) {
      q = random_simplex_point(vocab_size, rng);
    } else {
      const double sigma = std::exp(log_scale(rng));
      q.resize(vocab_size);
      for (std::size_t i = 0; i < vocab_size; ++i) q[i] = optimum[i] * std::exp(sigma * noise(rng));
      q = normalize(std::move(q));
    }
    if (total_variation(q, optimum) == 0.0) continue;
    // Ties within rounding do not count.
    if (kl_regularized_objective(q, base, reward, beta) > best + kObjectiveSlack * std::max(1.0, std::abs(best))) {
      ++beaten;
    }
  }

  // Ascent: pi <- pi + eta * pi * (g - <pi, g>), g the objective gradient.
  double worst_tv = 0.0;
  for (std::size_t s = 0; s < options.ascent_starts; ++s) {
    auto pi = random_simplex_point(vocab_size, rng);
    for (int it = 0; it < 20000; ++it) {
      std::vector<double> g(vocab_size);
      double mean = 0.0;
      for (std::size_t i = 0; i < vocab_size; ++i) {
        g[i] = reward[i] - beta * (std::log(pi[i] / base[i]) + 1.0);
        mean += pi[i] * g[i];
      }
      double spread = 0.0;
      for (std::size_t i = 0; i < vocab_size; ++i) spread = std::max(spread, std::abs(g[i] - mean));
      const double eta = std::min(0.5 / beta, 0.5 / std::max(spread, 1e-300));
      double moved = 0.0;
      for (std::size_t i = 0; i < vocab_size; ++i) {
        const double delta = eta * pi[i] * (g[i] - mean);
        pi[i] += delta;
        moved += std::abs(delta);
      }
      pi = normalize(std::move(pi));
      if (moved < 1e-16) break;
    }
    worst_tv = std::max(worst_tv, total_variation(pi, optimum));
  }

  rep.max_error = worst_tv;
  rep.pass = beaten == 0 && worst_tv <= options.tv_tolerance;
  rep.notes = "vocab=" + std::to_string(vocab_size) + " beta=" + fmt(beta) +
              " perturbations_beating_optimum=" + std::to_string(beaten) +
              " ascent_tv=" + fmt(worst_tv);
  return rep;
}

Report verify_generative_reward_identity(std::size_t vocab_size, std::uint64_t seed,
                                         RewardIdentityOptions options) {
  Report rep = make_report("generative_reward_identity", seed);
  if (vocab_size < 2 || vocab_size > 16) {
    rep.notes = "vocab_size must lie in [2, 16]";
    return rep;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::uniform_real_distribution<double> beta_dist(0.2, 2.0);
  const auto ref = random_distribution(vocab_size, 1.0, rng);
  std::vector<double> reward(vocab_size);
  for (double& r : reward) r = options.zero_reward ? 0.0 : unif(rng) + options.reward_shift;
  const double beta = beta_dist(rng);

  double z = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) z += ref[i] * std::exp(reward[i] / beta);
  std::vector<double> tilted(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) tilted[i] = ref[i] * std::exp(reward[i] / beta) / z;

  double err = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const double recovered = beta * std::log(tilted[i] / ref[i]) + beta * std::log(z);
    err = std::max(err, std::abs(recovered - reward[i]));
  }
  double pair_err = 0.0;
  for (std::size_t a = 0; a < vocab_size; ++a) {
    for (std::size_t b = 0; b < vocab_size; ++b) {
      const double diff = beta * (std::log(tilted[a] / ref[a]) - std::log(tilted[b] / ref[b]));
      pair_err = std::max(pair_err, std::abs(diff - (reward[a] - reward[b])));
    }
  }
  rep.max_error = std::max(err, pair_err);
  rep.pass = rep.max_error <= 1e-9;
  rep.notes = "pointwise_error=" + fmt(err) + " pairwise_error_without_Z=" + fmt(pair_err);
  return rep;
}

double angle_between(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double c = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
  // atan2 form keeps precision near zero.
  double cross = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] / std::sqrt(aa) - c * b[i] / std::sqrt(bb);
    cross += r * r;
  }
  return std::atan2(std::sqrt(cross), c);
}

std::vector<double> sphere_search(std::span<const double> d, std::uint64_t seed,
                                  std::size_t directions) {
  const std::size_t k = d.size();
  auto objective = [&](std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += d[i] * q[i];
    return s;
  };
  auto unit = [](std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    for (double& x : v) x /= s;
    return v;
  };

  // Scan in fixed blocks; each block has its own stream so the winner does
  // not depend on the thread count.
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (directions + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> block_best(blocks);
  std::vector<double> block_value(blocks, -std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(b + 1)));
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t count = std::min(kBlock, directions - b * kBlock);
    for (std::size_t t = 0; t < count; ++t) {
      std::vector<double> q(k);
      for (double& x : q) x = g(rng);
      q = unit(std::move(q));
      const double v = objective(q);
      if (v > block_value[b]) {
        block_value[b] = v;
        block_best[b] = std::move(q);
      }
    }
  }
  const auto win = static_cast<std::size_t>(
      std::max_element(block_value.begin(), block_value.end()) - block_value.begin());
  auto best = block_best[win];
  double best_value = block_value[win];

  // Hill climbing with a shrinking step radius.
  std::mt19937_64 rng(splitmix64(seed ^ 0xabcdefULL));
  std::normal_distribution<double> g(0.0, 1.0);
  double radius = 0.2;
  int failures = 0;
  while (radius > 1e-10) {
    std::vector<double> q(k);
    for (std::size_t i = 0; i < k; ++i) q[i] = best[i] + radius * g(rng);
    q = unit(std::move(q));
    const double v = objective(q);
    if (v > best_value) {
      best_value = v;
      best = std::move(q);
      failures = 0;
    } else if (++failures >= 40) {
      radius *= 0.5;
      failures = 0;
    }
  }
  return best;
}

Report verify_sphere_maximizer(std::size_t k, std::uint64_t seed, std::vector<double> d,
                               double tolerance) {
  Report rep = make_report("sphere_maximizer", seed);
  if (d.empty()) {
    if (k < 1 || k > 6) {
      rep.notes = "k must lie in [1, 6]";
      return rep;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    d.resize(k);
    for (double& x : d) x = g(rng);
  }
  const auto searched = sphere_search(d, seed);
  const auto solved = solve_from_direction(d, {}, 1);
  if (solved.degenerate) {
    rep.notes = "degenerate direction";
    return rep;
  }
  rep.max_error = angle_between(searched, solved.p.values());
  rep.pass = rep.max_error <= tolerance;
  rep.notes = "k=" + std::to_string(d.size()) + " angle=" + fmt(rep.max_error);
  return rep;
}

std::vector<double> product_distribution(std::span<const double> h_llm,
                                         std::span<const double> h_base,
                                         const std::vector<std::vector<double>>& h_attrs,
                                         std::span<const double> p, double beta) {
  const auto pi_llm = direct_softmax(h_llm);
  std::vector<double> out = pi_llm;
  if (!h_attrs.empty()) {
    const auto pi_base = direct_softmax(h_base);
    for (std::size_t i = 0; i < h_attrs.size(); ++i) {
      const auto pi_i = direct_softmax(h_attrs[i]);
      for (std::size_t w = 0; w < out.size(); ++w) {
        out[w] *= std::pow(pi_i[w] / pi_base[w], p[i] / beta);
      }
    }
  }
  return normalize(std::move(out));
}

Report verify_sequence_level_composition(std::size_t vocab_size, std::size_t horizon,
                                         std::size_t k, std::uint64_t seed) {
  Report rep = make_report("sequence_level_composition", seed);
  if (vocab_size < 4 || vocab_size > 6 || horizon < 1 || horizon > 3 || k > 8) {
    rep.notes = "need 4 <= vocab <= 6, 1 <= horizon <= 3, k <= 8";
    return rep;
  }
  const ToyLm llm({vocab_size, 2, splitmix64(seed ^ 0x11), std::nullopt});
  const ToyLm slm({vocab_size, 2, splitmix64(seed ^ 0x22), std::nullopt});
  const auto full = AttributeCatalog::standard();
  const std::string prompt = "t1 t2";
  const double beta = 0.5;

  std::vector<double> p(k);
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    double s = 0.0;
    for (double& x : p) {
      x = g(rng);
      s += x * x;
    }
    for (double& x : p) x /= std::sqrt(s);
  }

  std::size_t total = 1;
  for (std::size_t t = 0; t < horizon; ++t) total *= vocab_size;

  std::vector<double> stepwise(total), product(total), tilted(total);
  double max_err = 0.0;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<TokenId> seq(horizon);
    for (std::size_t t = 0, c = code; t < horizon; ++t, c /= vocab_size) {
      seq[t] = static_cast<TokenId>(c % vocab_size);
    }
    double log_step = 0.0, log_prod = 0.0, log_llm = 0.0;
    std::vector<double> seq_reward(k, 0.0);
    std::vector<TokenId> prefix;
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto h_llm = llm.next_logits({"", prompt, prefix});
      const auto h_base = slm.next_logits({full.base().system_prompt, prompt, prefix});
      std::vector<LogitVector> h_attrs;
      std::vector<std::vector<double>> raw;
      for (std::size_t i = 0; i < k; ++i) {
        h_attrs.push_back(slm.next_logits({full.attribute(i).system_prompt, prompt, prefix}));
        raw.push_back(h_attrs.back().values);
      }
      const auto composite = composite_logits(h_llm, h_base, h_attrs, p, Beta(beta));
      const double lp_step = log_softmax(composite.values)[seq[t]];
      const auto prod = product_distribution(h_llm.values, h_base.values, raw, p, beta);
      max_err = std::max(max_err, std::abs(std::exp(lp_step) - prod[seq[t]]));
      log_step += lp_step;
      log_prod += std::log(prod[seq[t]]);

      const auto base_lp = log_softmax(h_base.values);
      for (std::size_t i = 0; i < k; ++i) {
        seq_reward[i] += log_softmax(h_attrs[i].values)[seq[t]] - base_lp[seq[t]];
      }
      log_llm += log_softmax(h_llm.values)[seq[t]];
      prefix.push_back(seq[t]);
    }
    stepwise[code] = std::exp(log_step);
    product[code] = std::exp(log_prod);
    double tilt = log_llm;
    for (std::size_t i = 0; i < k; ++i) tilt += p[i] / beta * seq_reward[i];
    tilted[code] = std::exp(tilt);
    max_err = std::max(max_err, std::abs(stepwise[code] - product[code]));
  }
  tilted = normalize(std::move(tilted));
  const double gap = total_variation(stepwise, tilted);

  rep.max_error = max_err;
  rep.pass = max_err <= 1e-9 && (horizon > 1 || gap <= 1e-12) && (k > 0 || gap <= 1e-12);
  rep.notes = "vocab=" + std::to_string(vocab_size) + " horizon=" + std::to_string(horizon) +
              " k=" + std::to_string(k) + " tv_gap_to_sequence_target=" + fmt(gap);
  return rep;
}

std::vector<Report> run_all(std::uint64_t seed) {
  std::vector<Report> out;
  for (std::uint64_t i = 0; i < 5; ++i) out.push_back(verify_rl_closed_form(8 + i, seed + i));
  for (std::uint64_t i = 0; i < 5; ++i) {
    out.push_back(verify_generative_reward_identity(4 + 2 * i, seed + i));
  }
  for (std::uint64_t i = 0; i < 10; ++i) out.push_back(verify_sphere_maximizer(1 + i % 6, seed + i));
  out.push_back(verify_sequence_level_composition(4, 1, 2, seed));
  out.push_back(verify_sequence_level_composition(4, 2, 1, seed));
  out.push_back(verify_sequence_level_composition(5, 3, 3, seed));
  out.push_back(verify_sequence_level_composition(6, 2, 0, seed));
  return out;
}

}  // namespace drift::oracle
