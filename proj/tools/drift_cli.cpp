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


#include <httplib.h>

#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "drift/approximation.h"
#include "drift/datasets.h"
#include "drift/decoding.h"
#include "drift/oracle.h"
#include "drift/remote_lm.h"
#include "drift/rewarding.h"
#include "drift/service.h"
#include "drift/toy_lm.h"

namespace {

using drift::AttributeCatalog;
using drift::LmBackend;
using nlohmann::json;

struct Common {
  std::string backend = "toy";
  std::uint64_t seed = 0;
  std::uint64_t toy_seed = 0;
  std::size_t toy_vocab = 64;
  std::string slm_url;
  std::string llm_url;
  std::string catalog = "standard";
  std::string data_dir;
  bool json = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--backend", c.backend, "Language model backend")
      ->check(CLI::IsMember({"toy", "remote"}))
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  cmd->add_option("--toy-seed", c.toy_seed, "Seed of the toy backends")->capture_default_str();
  cmd->add_option("--toy-vocab", c.toy_vocab, "Toy vocabulary size")->capture_default_str();
  cmd->add_option("--slm-url", c.slm_url, "Remote small model (default $DRIFT_LM_URL)");
  cmd->add_option("--llm-url", c.llm_url, "Remote large model (default $DRIFT_LM_URL)");
  cmd->add_option("--catalog", c.catalog, "Catalog JSON file, or 'standard' / 'cue'")
      ->capture_default_str();
  cmd->add_option("--data-dir", c.data_dir, "State directory (default $DRIFT_DATA_DIR)");
  cmd->add_flag("--json", c.json, "Machine-readable output");
}

std::shared_ptr<const LmBackend> make_backend(const Common& c, bool large) {
  if (c.backend == "toy") {
    return std::make_shared<drift::ToyLm>(
        drift::ToyLmConfig{c.toy_vocab, 2, c.toy_seed + (large ? 1 : 0), std::nullopt});
  }
  const std::string& url = large ? c.llm_url : c.slm_url;
  drift::RemoteLmConfig cfg;
  if (url.empty()) {
    cfg = drift::RemoteLmConfig::from_env();
  } else {
    cfg.base_url = url;
  }
  return std::make_shared<drift::RemoteLm>(cfg);
}

AttributeCatalog make_catalog(const Common& c) {
  if (c.catalog == "standard") return AttributeCatalog::standard();
  if (c.catalog == "cue") return drift::cue_catalog(AttributeCatalog::standard());
  return drift::load_catalog(c.catalog);
}

std::string data_dir_or_env(const Common& c) {
  if (!c.data_dir.empty()) return c.data_dir;
  const char* env = std::getenv("DRIFT_DATA_DIR");
  return env ? env : "";
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw drift::InvalidArgument("cannot write " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw drift::InvalidArgument("cannot open " + path);
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw drift::InvalidArgument(path + ": malformed JSON");
  return j;
}

// ---- approximate ------------------------------------------------------------

struct ApproximateArgs {
  std::string dataset;
  std::string out;
  std::string cache;
  std::string user = "cli";
  std::size_t attributes_top = drift::kDefaultSubsetSize;
  bool length_normalized = false;
  bool skip_failures = false;
};

int run_approximate(const Common& c, const ApproximateArgs& a) {
  std::vector<std::string> warnings;
  const auto ds = drift::load_jsonl(a.dataset, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (ds.pairs.empty()) throw drift::InvalidArgument("dataset " + a.dataset + " has no pairs");

  const auto catalog = make_catalog(c);
  const auto slm = make_backend(c, false);
  std::unique_ptr<drift::FeatureCache> cache;
  if (!a.cache.empty()) cache = std::make_unique<drift::FeatureCache>(a.cache);
  drift::BuildOptions opts;
  opts.reward.length_normalized = a.length_normalized;
  opts.skip_failures = a.skip_failures;
  opts.cache = cache.get();
  const auto built = drift::build_feature_matrices(*slm, catalog, ds.pairs, opts);
  if (built.features.n() == 0) throw drift::InvalidArgument("no pair could be scored");

  auto profile = drift::UserProfile::fresh(a.user, catalog, a.attributes_top);
  std::vector<drift::RewardRowPair> rows;
  for (std::size_t j = 0; j < built.features.n(); ++j) {
    const auto w = built.features.W.row(j);
    const auto l = built.features.L.row(j);
    rows.push_back({{w.begin(), w.end()}, {l.begin(), l.end()}});
  }
  drift::append_and_resolve(profile, rows);
  auto pj = drift::profile_to_json(profile);
  pj["skipped"] = built.skipped;
  if (!a.out.empty()) write_json_file(a.out, pj);

  if (c.json) {
    std::cout << pj.dump(2) << '\n';
    return 0;
  }
  const auto uip = profile.unit_implicit_preference();
  std::cout << "pairs: " << profile.n_pairs << "  skipped: " << built.skipped.size()
            << "  degenerate: " << (profile.report.degenerate ? "yes" : "no") << '\n';
  std::cout << std::left << std::setw(26) << "attribute" << std::right << std::setw(14) << "p"
            << std::setw(16) << "mean W-L" << "  selected\n";
  std::vector<bool> sel(catalog.size(), false);
  for (std::size_t i : profile.selected.indices) sel[i] = true;
  std::cout << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    std::cout << std::left << std::setw(26) << profile.attribute_names[i] << std::right
              << std::setw(14) << profile.report.p[i] << std::setw(16) << uip[i]
              << (sel[i] ? "  *" : "") << '\n';
  }
  std::cout << "selected (" << profile.selected.size() << "):";
  for (std::size_t i : profile.selected.indices) std::cout << ' ' << profile.attribute_names[i];
  std::cout << '\n';
  return 0;
}

// ---- synthesize -------------------------------------------------------------

struct SynthesizeArgs {
  std::string out;
  std::size_t k = 5;
  std::size_t n = 200;
  std::size_t sparse = 0;
  double noise = 0.0;
  std::size_t response_tokens = 3;
  std::size_t prompts = 50;
};

int run_synthesize(const Common& c, const SynthesizeArgs& a) {
  if (c.backend != "toy") throw drift::InvalidArgument("synthesize needs the toy backend");
  const auto catalog = make_catalog(c).prefix(a.k);
  const drift::ToyLm slm({c.toy_vocab, 2, c.toy_seed, std::nullopt});
  const auto p_star = a.sparse ? drift::random_sparse_weights(a.k, a.sparse, c.seed, catalog.names())
                               : drift::random_unit_weights(a.k, c.seed, catalog.names());
  const auto pool = drift::synthetic_prompt_pool(a.prompts, drift::splitmix64(c.seed), c.toy_vocab);
  drift::SyntheticPersonaSpec spec{p_star, a.noise, a.n, c.seed, a.response_tokens};
  const auto ds = drift::synthesize_persona_dataset(spec, slm, catalog, pool);
  drift::save_jsonl(ds, a.out);
  write_json_file(a.out + ".catalog.json", drift::catalog_to_json(catalog));
  const json meta{{"p_star", p_star.values()},
                  {"attribute_names", p_star.names()},
                  {"n_pairs", ds.pairs.size()},
                  {"seed", c.seed},
                  {"noise_flip_prob", a.noise}};
  write_json_file(a.out + ".meta.json", meta);
  if (c.json) {
    std::cout << meta.dump(2) << '\n';
  } else {
    std::cout << "wrote " << ds.pairs.size() << " pairs to " << a.out << " (catalog " << a.out
              << ".catalog.json)\n";
  }
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::vector<std::size_t> ns;
  std::size_t seeds = 10;
  std::string estimator = "drift_qp";
  std::size_t held_out = 0;
  std::string out;
  std::string plot;
};

int run_eval(const Common& c, const EvalArgs& a) {
  for (std::size_t i = 1; i < a.ns.size(); ++i) {
    if (a.ns[i] <= a.ns[i - 1]) throw drift::InvalidArgument("--ns must be strictly increasing");
  }
  const auto estimator = drift::parse_estimator(a.estimator);
  std::vector<std::string> warnings;
  const auto ds = drift::load_jsonl(a.dataset, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (ds.pairs.empty()) throw drift::InvalidArgument("dataset " + a.dataset + " has no pairs");
  const auto catalog = make_catalog(c);
  const auto slm = make_backend(c, false);
  const auto built = drift::build_feature_matrices(*slm, catalog, ds.pairs);
  const auto curve =
      drift::kshot_eval(built.features, a.ns, a.seeds, estimator, {a.held_out, c.seed});
  if (!a.out.empty()) drift::write_curve_csv(curve, a.out);
  if (!a.plot.empty()) drift::write_curve_svg({{std::string(drift::to_string(estimator)), curve}}, a.plot);
  if (c.json) {
    json points = json::array();
    for (const auto& p : curve.points) {
      points.push_back({{"n_train", p.n_train}, {"accuracy", p.accuracy}, {"std", p.std}});
    }
    std::cout << json{{"estimator", a.estimator}, {"seeds", a.seeds}, {"points", points}}.dump(2)
              << '\n';
  } else {
    std::cout << "n_train,accuracy,std\n" << std::setprecision(6) << std::fixed;
    for (const auto& p : curve.points) {
      std::cout << p.n_train << ',' << p.accuracy << ',' << p.std << '\n';
    }
  }
  return 0;
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string profile;
  std::string prompt;
  double beta = 0.5;
  double top_p = 0.9;
  std::size_t top_k = 0;
  double temperature = 1.0;
  bool greedy = false;
  std::size_t max_tokens = drift::kDefaultMaxTokens;
  std::size_t attributes_top = drift::kDefaultSubsetSize;
  std::string trace;
};

int run_generate(const Common& c, const GenerateArgs& a) {
  const auto catalog = make_catalog(c);
  const auto llm = make_backend(c, true);
  const auto slm = make_backend(c, false);

  drift::DriftConfig cfg;
  cfg.beta = drift::Beta(a.beta);
  cfg.max_tokens = a.max_tokens;
  cfg.sampler = a.greedy ? drift::SamplerSpec::greedy()
                         : drift::SamplerSpec::with_top_p(a.top_p, a.temperature);
  cfg.sampler.top_k = a.top_k;
  cfg.weights = drift::WeightVector::zero(catalog.names());
  if (!a.profile.empty()) {
    auto profile = drift::profile_from_json(read_json_file(a.profile), catalog);
    if (!profile.report.degenerate) {
      cfg.weights = profile.report.p;
      cfg.subset = drift::select_attributes(cfg.weights, std::min(a.attributes_top, catalog.size()));
    }
  }

  const json header{{"backend", c.backend},
                    {"seed", c.seed},
                    {"beta", a.beta},
                    {"sampler", std::string(drift::to_string(cfg.sampler.kind))},
                    {"top_p", a.top_p},
                    {"top_k", a.top_k},
                    {"temperature", a.temperature},
                    {"max_tokens", a.max_tokens},
                    {"attributes_top", a.attributes_top},
                    {"profile", a.profile},
                    {"unpersonalized", cfg.unpersonalized()}};
  const auto gen = drift::generate(*llm, *slm, catalog, cfg, a.prompt, c.seed);
  const auto text = llm->detokenize(gen.tokens);

  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    out << json{{"header", header}}.dump() << '\n';
    drift::write_trace_jsonl(out, gen.traces);
    if (!out) throw drift::InvalidArgument("cannot write " + a.trace);
  }
  const auto shift = drift::measure_entropy_shift(gen.traces);
  if (c.json) {
    json out{{"header", header},
             {"text", text},
             {"tokens", gen.tokens},
             {"stopped_at_eos", gen.stopped_at_eos},
             {"entropy_base_bits", shift.mean_base_bits},
             {"entropy_drift_bits", shift.mean_drift_bits}};
    if (gen.error) out["error"] = *gen.error;
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "# " << header.dump() << '\n' << text << '\n';
    if (gen.error) std::cerr << "error: generation stopped early: " << *gen.error << '\n';
  }
  return gen.error ? 1 : 0;
}

// ---- verify -----------------------------------------------------------------

int run_verify(const Common& c) {
  const auto reports = drift::oracle::run_all(c.seed);
  bool ok = true;
  json arr = json::array();
  for (const auto& r : reports) {
    ok = ok && r.pass;
    arr.push_back(r.to_json());
    if (!c.json) {
      std::cout << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(28) << r.check
                << " seed=" << r.seed << " max_error=" << std::scientific << std::setprecision(3)
                << r.max_error << std::defaultfloat;
      if (!r.notes.empty()) std::cout << "  " << r.notes;
      std::cout << '\n';
    }
  }
  if (c.json) std::cout << arr.dump(2) << '\n';
  return ok ? 0 : 1;
}

// ---- serve / toy-server -----------------------------------------------------

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string ui_dir;
  std::size_t attributes_top = drift::kDefaultSubsetSize;
  double beta = 0.5;
  double top_p = 0.9;
  std::size_t max_tokens = drift::kDefaultMaxTokens;
  int latency_ms = 0;
  bool no_logits = false;
};

int listen(httplib::Server& server, const std::string& host, int port, bool json_out) {
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  if (!server.bind_to_port(host, port)) throw drift::InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
  if (json_out) {
    std::cout << json{{"host", host}, {"port", port}}.dump() << std::endl;
  } else {
    std::cout << "listening on http://" << host << ':' << port << std::endl;
  }
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

int run_serve(const Common& c, const ServeArgs& a) {
  auto cfg = drift::ServiceConfig::from_env();
  cfg.data_dir = data_dir_or_env(c);
  if (!a.ui_dir.empty()) cfg.ui_dir = a.ui_dir;
  cfg.subset_size = a.attributes_top;
  cfg.beta = a.beta;
  cfg.sampler = drift::SamplerSpec::with_top_p(a.top_p);
  cfg.max_tokens = a.max_tokens;
  drift::DriftService service(make_backend(c, true), make_backend(c, false), make_catalog(c), cfg);
  httplib::Server server;
  service.mount(server);
  const int port = a.port ? a.port : drift::service_port_from_env();
  const int rc = listen(server, a.host, port, c.json);
  service.snapshot();
  return rc;
}

int run_toy_server(const Common& c, const ServeArgs& a) {
  auto backend = std::make_shared<drift::ToyLm>(drift::ToyLmConfig{c.toy_vocab, 2, c.toy_seed, std::nullopt});
  httplib::Server server;
  drift::mount_backend_routes(server, backend,
                              {std::chrono::milliseconds(a.latency_ms), !a.no_logits});
  return listen(server, a.host, a.port ? a.port : 8080, c.json);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drift: decoding-time personalization from pairwise preferences"};
  app.require_subcommand(1);
  Common common;

  ApproximateArgs approx;
  auto* approximate = app.add_subcommand("approximate", "Estimate attribute weights from a preference dataset");
  add_common(approximate, common);
  approximate->add_option("--dataset", approx.dataset, "Preference pairs (JSONL)")->required();
  approximate->add_option("--out", approx.out, "Write the profile JSON here");
  approximate->add_option("--cache", approx.cache, "Reward-row cache (JSONL)");
  approximate->add_option("--user", approx.user, "User id stored in the profile")->capture_default_str();
  approximate->add_option("--attributes-top", approx.attributes_top, "Attributes kept for generation")
      ->capture_default_str();
  approximate->add_flag("--length-normalized", approx.length_normalized, "Per-token log-probabilities");
  approximate->add_flag("--skip-failures", approx.skip_failures, "Drop pairs whose scoring fails");

  SynthesizeArgs synth;
  auto* synthesize = app.add_subcommand("synthesize", "Write a synthetic persona dataset (toy backend)");
  add_common(synthesize, common);
  synthesize->add_option("--out", synth.out, "Output JSONL")->required();
  synthesize->add_option("--k", synth.k, "Catalog prefix size")->capture_default_str();
  synthesize->add_option("--n", synth.n, "Pairs")->capture_default_str();
  synthesize->add_option("--sparse", synth.sparse, "Nonzero ground-truth weights (0 = dense)");
  synthesize->add_option("--noise", synth.noise, "Label flip probability")->capture_default_str();
  synthesize->add_option("--response-tokens", synth.response_tokens, "Tokens per response")
      ->capture_default_str();
  synthesize->add_option("--prompts", synth.prompts, "Prompt pool size")->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "k-shot pairwise accuracy curve");
  add_common(eval, common);
  eval->add_option("--dataset", ev.dataset, "Preference pairs (JSONL)")->required();
  eval->add_option("--ns", ev.ns, "Training sizes, comma separated and increasing")
      ->required()
      ->delimiter(',');
  eval->add_option("--seeds", ev.seeds, "Random splits per point")->capture_default_str();
  eval->add_option("--estimator", ev.estimator, "drift_qp or logistic")->capture_default_str();
  eval->add_option("--held-out", ev.held_out, "Test pairs per split (0 = the rest)");
  eval->add_option("--out", ev.out, "Write the curve CSV here");
  eval->add_option("--plot", ev.plot, "Write an SVG plot here");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Drift decoding with a stored profile");
  add_common(generate, common);
  generate->add_option("--profile", gen.profile, "Profile JSON from approximate (omit for base sampling)");
  generate->add_option("--prompt", gen.prompt, "User prompt")->required();
  generate->add_option("--beta", gen.beta, "KL strength")->capture_default_str();
  generate->add_option("--top-p", gen.top_p, "Nucleus mass")->capture_default_str();
  generate->add_option("--top-k", gen.top_k, "Top-k cut (0 = off)")->capture_default_str();
  generate->add_option("--temperature", gen.temperature, "Sampling temperature")->capture_default_str();
  generate->add_flag("--greedy", gen.greedy, "Argmax decoding");
  generate->add_option("--max-tokens", gen.max_tokens, "Generation length cap")->capture_default_str();
  generate->add_option("--attributes-top", gen.attributes_top, "Attributes composed per step")
      ->capture_default_str();
  generate->add_option("--trace", gen.trace, "Write per-step logits (JSONL) here");

  auto* verify = app.add_subcommand("verify", "Run every oracle check");
  add_common(verify, common);

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve, common);
  serve->add_option("--host", srv.host, "Bind address")->capture_default_str();
  serve->add_option("--port", srv.port, "Port (default $DRIFT_PORT or 8787)");
  serve->add_option("--ui-dir", srv.ui_dir, "Static bundle served under /app");
  serve->add_option("--attributes-top", srv.attributes_top, "Attributes kept per profile")
      ->capture_default_str();
  serve->add_option("--beta", srv.beta, "Default KL strength")->capture_default_str();
  serve->add_option("--top-p", srv.top_p, "Default nucleus mass")->capture_default_str();
  serve->add_option("--max-tokens", srv.max_tokens, "Default generation cap")->capture_default_str();

  ServeArgs toy;
  auto* toy_server = app.add_subcommand("toy-server", "Serve the toy model over the backend HTTP API");
  add_common(toy_server, common);
  toy_server->add_option("--host", toy.host, "Bind address")->capture_default_str();
  toy_server->add_option("--port", toy.port, "Port (default 8080)");
  toy_server->add_option("--latency-ms", toy.latency_ms, "Added delay per request");
  toy_server->add_flag("--no-logits", toy.no_logits, "Answer /v1/logits with 501");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*approximate) return run_approximate(common, approx);
    if (*synthesize) return run_synthesize(common, synth);
    if (*eval) return run_eval(common, ev);
    if (*generate) return run_generate(common, gen);
    if (*verify) return run_verify(common);
    if (*serve) return run_serve(common, srv);
    if (*toy_server) return run_toy_server(common, toy);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
