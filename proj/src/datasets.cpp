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


#include "drift/datasets.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "drift/decoding.h"

namespace drift {

using nlohmann::json;

namespace {

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_++); }
  double uniform() { return unit_interval(next()); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::uint64_t state_;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

std::string require_string(const json& j, const char* field, std::size_t lineno) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw InvalidArgument("line " + std::to_string(lineno) + ": missing string field \"" + field + "\"");
  }
  return j[field].get<std::string>();
}

}  // namespace

void PreferenceDataset::validate() const {
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    p.validate();
    if (!ids.insert(p.pair_id).second) throw InvalidArgument("duplicate pair_id '" + p.pair_id + "'");
  }
}

PreferenceDataset load_jsonl(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset " + path.string());
  PreferenceDataset ds;
  ds.meta.source = path.string();
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw InvalidArgument(path.string() + ": line " + std::to_string(lineno) + ": malformed JSON");
    }
    try {
      PreferencePair p{require_string(j, "pair_id", lineno), require_string(j, "prompt", lineno),
                       require_string(j, "chosen", lineno), require_string(j, "rejected", lineno)};
      p.validate();
      if (!ids.insert(p.pair_id).second) {
        throw InvalidArgument("duplicate pair_id '" + p.pair_id + "'");
      }
      ds.pairs.push_back(std::move(p));
    } catch (const InvalidArgument& e) {
      std::string msg = e.what();
      if (msg.rfind("line ", 0) != 0) msg = "line " + std::to_string(lineno) + ": " + msg;
      throw InvalidArgument(path.string() + ": " + msg);
    }
  }
  if (ds.pairs.empty() && warnings) warnings->push_back(path.string() + ": dataset is empty");
  return ds;
}

void save_jsonl(const PreferenceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write dataset " + path.string());
  for (const auto& p : dataset.pairs) {
    out << json{{"pair_id", p.pair_id}, {"prompt", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}}
               .dump()
        << '\n';
  }
}

void SyntheticPersonaSpec::validate() const {
  if (p_star.size() == 0 || std::abs(p_star.norm() - 1.0) > kUnitNormTolerance) {
    throw InvalidArgument("p_star must be a unit vector");
  }
  if (!(noise_flip_prob >= 0.0 && noise_flip_prob < 0.5)) {
    throw InvalidArgument("noise_flip_prob must lie in [0, 0.5)");
  }
  if (response_tokens < 1) throw InvalidArgument("response_tokens must be >= 1");
}

PreferenceDataset synthesize_persona_dataset(const SyntheticPersonaSpec& spec, const ToyLm& backend,
                                             const AttributeCatalog& catalog,
                                             std::span<const std::string> prompt_pool) {
  spec.validate();
  if (prompt_pool.empty()) throw InvalidArgument("prompt pool is empty");
  if (spec.p_star.size() != catalog.size()) {
    throw InvalidArgument("p_star length does not match the catalog");
  }
  SplitMix rng(spec.seed);
  const auto sampler = SamplerSpec::with_temperature(1.0);

  auto sample_response = [&](const std::string& prompt) {
    std::vector<TokenId> tokens;
    for (std::size_t t = 0; t < spec.response_tokens; ++t) {
      const auto h = backend.next_logits({catalog.base().system_prompt, prompt, tokens});
      tokens.push_back(sample_token(h, sampler, rng.next()));
    }
    return backend.detokenize(tokens);
  };
  auto utility = [&](const std::string& prompt, const std::string& response) {
    const auto r = differential_reward(backend, catalog, prompt, response);
    double u = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) u += spec.p_star[i] * r[i];
    return u;
  };

  PreferenceDataset ds;
  ds.meta.source = "synthetic-persona";
  ds.meta.user_id = "persona-" + std::to_string(spec.seed);
  ds.meta.p_star = spec.p_star;
  for (std::size_t j = 0; j < spec.n_pairs; ++j) {
    const auto& prompt = prompt_pool[rng.below(prompt_pool.size())];
    const auto a = sample_response(prompt);
    const double ua = utility(prompt, a);
    std::string b;
    double ub = 0.0;
    bool found = false;
    for (int attempt = 0; attempt <= 10 && !found; ++attempt) {
      b = sample_response(prompt);
      if (b == a) continue;
      ub = utility(prompt, b);
      found = ub != ua;
    }
    if (!found) continue;
    const bool a_wins = (ua > ub) != (rng.uniform() < spec.noise_flip_prob);
    ds.pairs.push_back({"syn-" + std::to_string(spec.seed) + "-" + std::to_string(j), prompt,
                        a_wins ? a : b, a_wins ? b : a});
  }
  return ds;
}

AttributeCatalog cue_catalog(const AttributeCatalog& catalog) {
  std::string stem = catalog.base().system_prompt;
  while (!stem.empty() && (stem.back() == '.' || stem.back() == ' ')) stem.pop_back();
  std::vector<AttributePrompt> attrs;
  for (const auto& a : catalog.attributes()) {
    std::string words = a.name;
    std::replace(words.begin(), words.end(), '_', ' ');
    attrs.push_back({a.name, stem + ": " + words + "."});
  }
  return AttributeCatalog(catalog.base(), std::move(attrs));
}

WeightVector random_unit_weights(std::size_t k, std::uint64_t seed, std::vector<std::string> names) {
  if (k < 1) throw InvalidArgument("random_unit_weights: k must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> v(k);
  double norm = 0.0;
  while (norm < 1e-6) {
    norm = 0.0;
    for (double& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return WeightVector(std::move(v), std::move(names));
}

WeightVector random_sparse_weights(std::size_t k, std::size_t support, std::uint64_t seed,
                                   std::vector<std::string> names) {
  if (support < 1 || support > k) throw InvalidArgument("random_sparse_weights: support outside [1, k]");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> mag(0.5, 1.0);
  std::vector<double> v(k, 0.0);
  double norm = 0.0;
  for (std::size_t i = 0; i < support; ++i) {
    const double sign = (rng() & 1) ? 1.0 : -1.0;
    v[idx[i]] = sign * mag(rng);
    norm += v[idx[i]] * v[idx[i]];
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return WeightVector(std::move(v), std::move(names));
}

std::vector<std::string> synthetic_prompt_pool(std::size_t n, std::uint64_t seed,
                                               std::size_t vocab_size) {
  if (vocab_size < 1) throw InvalidArgument("synthetic_prompt_pool: empty vocabulary");
  SplitMix rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t words = 2 + rng.below(3);
    std::string p;
    for (std::size_t w = 0; w < words; ++w) {
      if (w) p.push_back(' ');
      p += "t" + std::to_string(rng.below(vocab_size));
    }
    out.push_back(std::move(p));
  }
  return out;
}

double preference_score(const WeightVector& p, std::span<const double> w_row,
                        std::span<const double> l_row) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * (w_row[i] - l_row[i]);
  return s;
}

double pairwise_accuracy(const WeightVector& p, const FeatureMatrixPair& test) {
  if (test.n() == 0) throw InvalidArgument("pairwise_accuracy: empty test set");
  if (p.size() != test.k()) throw InvalidArgument("pairwise_accuracy: weight length mismatch");
  double hits = 0.0;
  for (std::size_t j = 0; j < test.n(); ++j) {
    const double s = preference_score(p, test.W.row(j), test.L.row(j));
    hits += s > 0.0 ? 1.0 : (s == 0.0 ? 0.5 : 0.0);
  }
  return hits / static_cast<double>(test.n());
}

Split split_indices(std::size_t n_total, std::size_t n_train, std::size_t held_out,
                    std::uint64_t seed) {
  if (n_train + held_out > n_total) throw InvalidArgument("split larger than the dataset");
  std::vector<std::size_t> perm(n_total);
  std::iota(perm.begin(), perm.end(), 0);
  SplitMix rng(seed);
  for (std::size_t i = n_total; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.end() - static_cast<std::ptrdiff_t>(held_out), perm.end());
  return s;
}

Estimator parse_estimator(std::string_view name) {
  if (name == "drift_qp") return Estimator::kDriftQp;
  if (name == "logistic") return Estimator::kLogistic;
  throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

std::string_view to_string(Estimator e) {
  return e == Estimator::kDriftQp ? "drift_qp" : "logistic";
}

EstimatorFn make_estimator(Estimator e) {
  if (e == Estimator::kDriftQp) {
    return [](const FeatureMatrixPair& train, std::uint64_t) { return solve_weights(train).p; };
  }
  return [](const FeatureMatrixPair& train, std::uint64_t) {
    return solve_weights_logistic(train).direction;
  };
}

namespace {

std::size_t resolve_held_out(std::size_t n_total, std::size_t max_train, std::size_t held_out) {
  if (held_out == 0) {
    if (max_train >= n_total) throw InvalidArgument("insufficient data: no rows left for testing");
    held_out = n_total - max_train;
  }
  if (max_train + held_out > n_total) {
    throw InvalidArgument("insufficient data: " + std::to_string(max_train) + " train + " +
                          std::to_string(held_out) + " test > " + std::to_string(n_total));
  }
  return held_out;
}

}  // namespace

EvalCurve kshot_eval(const FeatureMatrixPair& features, std::span<const std::size_t> ns,
                     std::size_t seeds_per_point, const EstimatorFn& estimator,
                     EvalOptions options) {
  features.validate();
  if (ns.empty()) throw InvalidArgument("kshot_eval: no training sizes");
  if (ns.front() < 1) throw InvalidArgument("kshot_eval: training sizes must be >= 1");
  for (std::size_t i = 1; i < ns.size(); ++i) {
    if (ns[i] <= ns[i - 1]) throw InvalidArgument("kshot_eval: training sizes must be strictly increasing");
  }
  if (seeds_per_point < 1) throw InvalidArgument("kshot_eval: seeds_per_point must be >= 1");
  const std::size_t held_out = resolve_held_out(features.n(), ns.back(), options.held_out);

  const std::size_t cells = ns.size() * seeds_per_point;
  std::vector<double> acc(cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t point = c / seeds_per_point;
    const std::size_t s = c % seeds_per_point;
    const auto split = split_indices(features.n(), ns[point], held_out,
                                     splitmix64(options.seed ^ splitmix64(s + 1)));
    const auto train = features.select(split.train);
    const auto test = features.select(split.test);
    const auto p = estimator(train, splitmix64(options.seed + 31 * c));
    acc[c] = pairwise_accuracy(p, test);
  }

  EvalCurve curve;
  curve.seeds_per_point = seeds_per_point;
  for (std::size_t point = 0; point < ns.size(); ++point) {
    const auto ms = mean_std(std::span<const double>(acc).subspan(point * seeds_per_point, seeds_per_point));
    curve.points.push_back({ns[point], ms.mean, ms.std});
  }
  return curve;
}

EvalCurve kshot_eval(const FeatureMatrixPair& features, std::span<const std::size_t> ns,
                     std::size_t seeds_per_point, Estimator estimator, EvalOptions options) {
  return kshot_eval(features, ns, seeds_per_point, make_estimator(estimator), options);
}

std::vector<ReductionPoint> attribute_reduction_eval(const FeatureMatrixPair& features,
                                                     std::span<const std::size_t> m_values,
                                                     std::size_t n_train,
                                                     std::size_t seeds_per_point,
                                                     EvalOptions options) {
  features.validate();
  for (std::size_t m : m_values) {
    if (m < 1 || m > features.k()) throw InvalidArgument("attribute_reduction_eval: m outside [1, k]");
  }
  if (seeds_per_point < 1 || n_train < 1) throw InvalidArgument("attribute_reduction_eval: bad sizes");
  const std::size_t held_out = resolve_held_out(features.n(), n_train, options.held_out);

  std::vector<std::vector<double>> acc(m_values.size(), std::vector<double>(seeds_per_point));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t s = 0; s < seeds_per_point; ++s) {
    const auto split = split_indices(features.n(), n_train, held_out,
                                     splitmix64(options.seed ^ splitmix64(s + 1)));
    const auto train = features.select(split.train);
    const auto test = features.select(split.test);
    const auto p = solve_weights(train).p;
    for (std::size_t mi = 0; mi < m_values.size(); ++mi) {
      const auto reduced = p.is_zero() ? p : restrict_weights(p, select_attributes(p, m_values[mi]));
      acc[mi][s] = pairwise_accuracy(reduced, test);
    }
  }
  std::vector<ReductionPoint> out;
  for (std::size_t mi = 0; mi < m_values.size(); ++mi) {
    const auto ms = mean_std(acc[mi]);
    out.push_back({m_values[mi], ms.mean, ms.std});
  }
  return out;
}

void write_curve_csv(const EvalCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "n_train,accuracy,std\n";
  out.precision(17);
  for (const auto& p : curve.points) out << p.n_train << ',' << p.accuracy << ',' << p.std << '\n';
}

EvalCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("n_train,accuracy,std", 0) != 0) {
    throw InvalidArgument(path.string() + ": missing CSV header");
  }
  EvalCurve curve;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    EvalPoint p;
    char c1 = 0, c2 = 0;
    if (!(row >> p.n_train >> c1 >> p.accuracy >> c2 >> p.std) || c1 != ',' || c2 != ',') {
      throw InvalidArgument(path.string() + ": line " + std::to_string(lineno) + ": malformed row");
    }
    curve.points.push_back(p);
  }
  return curve;
}

void write_curve_svg(const std::vector<std::pair<std::string, EvalCurve>>& curves,
                     const std::filesystem::path& path) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  std::size_t max_n = 1;
  for (const auto& [_, c] : curves) {
    for (const auto& p : c.points) max_n = std::max(max_n, p.n_train);
  }
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\""
      << kH - kPad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8 << "\" font-size=\"12\">n_train (max "
      << max_n << ")</text>\n";
  out << "<text x=\"4\" y=\"" << kPad - 10 << "\" font-size=\"12\">accuracy [0,1]</text>\n";
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& [label, c] = curves[ci];
    const char* color = kColors[ci % 4];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& p : c.points) {
      const double x = kPad + (kW - 2 * kPad) * static_cast<double>(p.n_train) / static_cast<double>(max_n);
      const double y = kH - kPad - (kH - 2 * kPad) * p.accuracy;
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - kPad - 90 << "\" y=\"" << kPad + 14 * static_cast<double>(ci)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace drift
