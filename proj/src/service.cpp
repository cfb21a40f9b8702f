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


#include "drift/service.h"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>

namespace drift {

using nlohmann::json;

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string content_pair_id(const PreferencePair& p) {
  return "c" + hex64(fnv1a64(p.prompt + '\x1f' + p.chosen + '\x1f' + p.rejected));
}

void validate_user_id(const std::string& id) {
  static const std::regex kPattern("[A-Za-z0-9_.-]{1,128}");
  if (!std::regex_match(id, kPattern)) throw InvalidArgument("invalid user id '" + id + "'");
}

json error_body(const std::string& message) { return json{{"error", message}}; }

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidArgument("request body must be a JSON object");
  return j;
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  if (!j.contains(name) || j[name].is_null()) return std::nullopt;
  try {
    return j[name].get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("field \"") + name + "\" has the wrong type");
  }
}

template <typename Fn>
auto guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const DriftError& e) {
      reply(res, http_status_for(e.kind()), error_body(e.what()));
    } catch (const json::exception& e) {
      reply(res, 400, error_body(e.what()));
    } catch (const std::exception& e) {
      reply(res, 500, error_body(e.what()));
    }
  };
}

json trace_to_json(const StepTrace& t, std::size_t step) {
  json attrs = json::array();
  for (const auto& h : t.h_attrs) attrs.push_back(h.values);
  return json{{"step", step},
              {"chosen", t.chosen},
              {"entropy_base_bits", t.entropy_base_bits},
              {"entropy_drift_bits", t.entropy_drift_bits},
              {"h_llm", t.h_llm.values},
              {"h_base", t.h_base.values},
              {"h_attrs", attrs},
              {"h_drift", t.h_drift.values}};
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* dir = std::getenv("DRIFT_DATA_DIR"); dir && *dir) c.data_dir = dir;
  if (const char* ui = std::getenv("DRIFT_UI_DIR"); ui && *ui) c.ui_dir = ui;
  return c;
}

int service_port_from_env() {
  const char* v = std::getenv("DRIFT_PORT");
  if (!v || !*v) return 8787;
  char* end = nullptr;
  const long port = std::strtol(v, &end, 10);
  if (*end != '\0' || port < 1 || port > 65535) throw InvalidArgument("DRIFT_PORT must be a port number");
  return static_cast<int>(port);
}

int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
      return 400;
    case ErrorKind::kPrecondition:
      return 422;
    case ErrorKind::kTransport:
    case ErrorKind::kCapability:
      return 502;
    case ErrorKind::kNumeric:
      return 500;
  }
  return 500;
}

json solve_report_to_json(const SolveReport& report, const std::vector<std::string>& names) {
  return json{{"p", report.p.values()},
              {"d", report.d},
              {"objective", report.objective},
              {"n_pairs", report.n_pairs},
              {"degenerate", report.degenerate},
              {"attribute_names", names}};
}

json profile_to_json(const UserProfile& u) {
  json selected = json::array();
  for (std::size_t i : u.selected.indices) selected.push_back(u.attribute_names[i]);
  return json{{"user_id", u.user_id},
              {"catalog_fp", u.catalog_fp},
              {"attribute_names", u.attribute_names},
              {"d", u.d},
              {"n_pairs", u.n_pairs},
              {"p", u.report.p.values()},
              {"objective", u.report.objective},
              {"degenerate", u.report.degenerate},
              {"selected", selected},
              {"selected_indices", u.selected.indices},
              {"subset_size", u.subset_size},
              {"unit_implicit_preference", u.unit_implicit_preference()},
              {"updated_at_ms", u.updated_at_ms}};
}

UserProfile profile_from_json(const json& j, const AttributeCatalog& catalog) {
  if (j.contains("catalog_fp") && j.at("catalog_fp").get<std::string>() != catalog.fingerprint()) {
    throw PreconditionError("profile was built for a different attribute catalog");
  }
  auto u = UserProfile::fresh(j.at("user_id").get<std::string>(), catalog,
                              j.at("subset_size").get<std::size_t>());
  u.d = j.at("d").get<std::vector<double>>();
  if (u.d.size() != catalog.size()) throw PreconditionError("snapshot profile has the wrong length");
  u.n_pairs = j.at("n_pairs").get<std::size_t>();
  u.report = solve_from_direction(u.d, u.attribute_names, u.n_pairs);
  u.selected = u.report.degenerate ? AttributeSubset{} : select_attributes(u.report.p, u.subset_size);
  u.updated_at_ms = j.at("updated_at_ms").get<std::int64_t>();
  return u;
}

AttributeCatalog catalog_from_json(const json& j) {
  auto prompt = [](const json& a) {
    return AttributePrompt{a.at("name").get<std::string>(), a.at("system_prompt").get<std::string>()};
  };
  std::vector<AttributePrompt> attrs;
  for (const auto& a : j.at("attributes")) attrs.push_back(prompt(a));
  return AttributeCatalog(prompt(j.at("base")), std::move(attrs));
}

AttributeCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open catalog " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InvalidArgument(path.string() + ": malformed JSON");
  try {
    return catalog_from_json(j);
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

json catalog_to_json(const AttributeCatalog& catalog) {
  json attrs = json::array();
  for (const auto& a : catalog.attributes()) {
    attrs.push_back({{"name", a.name}, {"system_prompt", a.system_prompt}});
  }
  return json{{"fingerprint", catalog.fingerprint()},
              {"base", {{"name", catalog.base().name}, {"system_prompt", catalog.base().system_prompt}}},
              {"attributes", attrs}};
}

DriftService::DriftService(std::shared_ptr<const LmBackend> llm, std::shared_ptr<const LmBackend> slm,
                           AttributeCatalog catalog, ServiceConfig config)
    : llm_(std::move(llm)), slm_(std::move(slm)), catalog_(std::move(catalog)), config_(std::move(config)) {
  if (!llm_ || !slm_) throw InvalidArgument("service needs both backends");
  Beta{config_.beta};
  config_.sampler.validate();
  if (config_.subset_size < 1) throw InvalidArgument("subset_size must be >= 1");
  if (!config_.data_dir.empty()) {
    std::filesystem::create_directories(config_.data_dir);
    cache_ = std::make_unique<FeatureCache>(config_.data_dir / "features.jsonl");
    load();
  }
}

void DriftService::load() {
  std::uint64_t snap_seq = 0;
  const auto snap_path = config_.data_dir / "snapshot.json";
  if (std::ifstream in(snap_path); in) {
    const auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw PreconditionError(snap_path.string() + ": malformed snapshot");
    if (j.at("catalog_fp").get<std::string>() != catalog_.fingerprint()) {
      throw PreconditionError("snapshot was written for a different attribute catalog");
    }
    snap_seq = j.at("seq").get<std::uint64_t>();
    for (const auto& pj : j.at("profiles")) {
      auto u = std::make_shared<const UserProfile>(profile_from_json(pj, catalog_));
      profiles_[u->user_id] = std::move(u);
    }
  }
  seq_ = snap_seq;

  const auto log_path = config_.data_dir / "events.jsonl";
  std::ifstream in(log_path);
  if (!in) return;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto e = json::parse(lines[i], nullptr, false);
    if (e.is_discarded()) {
      if (i + 1 == lines.size()) break;  // torn final write
      throw PreconditionError(log_path.string() + ":" + std::to_string(i + 1) + ": malformed event");
    }
    const auto seq = e.at("seq").get<std::uint64_t>();
    if (seq <= snap_seq) continue;
    const auto user = e.at("user_id").get<std::string>();
    const auto at = e.at("at_ms").get<std::int64_t>();
    if (e.at("type") == "create") {
      apply_locked(user, "", nullptr, at);
    } else {
      RewardRowPair rows{e.at("w_row").get<std::vector<double>>(), e.at("l_row").get<std::vector<double>>()};
      apply_locked(user, e.at("pair_id").get<std::string>(), &rows, at);
    }
    seq_ = std::max(seq_, seq);
  }
}

void DriftService::apply_locked(const std::string& user_id, const std::string& /*pair_id*/,
                                const RewardRowPair* rows, std::int64_t at_ms) {
  auto it = profiles_.find(user_id);
  auto next = std::make_shared<UserProfile>(
      it != profiles_.end() ? *it->second : UserProfile::fresh(user_id, catalog_, config_.subset_size));
  if (rows) append_and_resolve(*next, std::span<const RewardRowPair>(rows, 1));
  next->updated_at_ms = at_ms;
  profiles_[user_id] = std::move(next);
}

void DriftService::log_event_locked(const json& event) {
  if (config_.data_dir.empty()) return;
  std::ofstream out(config_.data_dir / "events.jsonl", std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw PreconditionError("cannot append to the event log");
}

bool DriftService::create_user(const std::string& user_id) {
  validate_user_id(user_id);
  std::unique_lock lock(mu_);
  if (profiles_.count(user_id)) return false;
  const auto at = now_ms();
  log_event_locked({{"seq", seq_ + 1}, {"type", "create"}, {"user_id", user_id}, {"at_ms", at}});
  ++seq_;
  apply_locked(user_id, "", nullptr, at);
  if (config_.snapshot_every && ++since_snapshot_ >= config_.snapshot_every) snapshot_locked();
  return true;
}

SolveReport DriftService::append_rows(const std::string& user_id, const std::string& pair_id,
                                      const RewardRowPair& rows) {
  validate_user_id(user_id);
  if (rows.w_row.size() != catalog_.size() || rows.l_row.size() != catalog_.size()) {
    throw InvalidArgument("reward rows do not match the catalog size");
  }
  for (std::size_t i = 0; i < rows.w_row.size(); ++i) {
    if (!std::isfinite(rows.w_row[i]) || !std::isfinite(rows.l_row[i])) {
      throw NumericError("non-finite reward row entry");
    }
  }
  std::unique_lock lock(mu_);
  const auto at = now_ms();
  log_event_locked({{"seq", seq_ + 1},
                    {"type", "append"},
                    {"user_id", user_id},
                    {"pair_id", pair_id},
                    {"w_row", rows.w_row},
                    {"l_row", rows.l_row},
                    {"at_ms", at}});
  ++seq_;
  apply_locked(user_id, pair_id, &rows, at);
  if (config_.snapshot_every && ++since_snapshot_ >= config_.snapshot_every) snapshot_locked();
  return profiles_.at(user_id)->report;
}

SolveReport DriftService::update_preference(const std::string& user_id, const PreferencePair& pair) {
  validate_user_id(user_id);
  pair.validate();
  PreferencePair keyed = pair;
  keyed.pair_id = content_pair_id(pair);
  BuildOptions opts;
  opts.reward = config_.reward;
  opts.cache = cache_.get();
  opts.parallel = false;
  const auto built = build_feature_matrices(*slm_, catalog_, std::span<const PreferencePair>(&keyed, 1), opts);
  const auto& fm = built.features;
  RewardRowPair rows{{fm.W.row(0).begin(), fm.W.row(0).end()}, {fm.L.row(0).begin(), fm.L.row(0).end()}};
  return append_rows(user_id, pair.pair_id, rows);
}

std::shared_ptr<const UserProfile> DriftService::profile(const std::string& user_id) const {
  std::shared_lock lock(mu_);
  auto it = profiles_.find(user_id);
  return it == profiles_.end() ? nullptr : it->second;
}

std::size_t DriftService::user_count() const {
  std::shared_lock lock(mu_);
  return profiles_.size();
}

std::uint64_t DriftService::last_seq() const {
  std::shared_lock lock(mu_);
  return seq_;
}

GenerateResult DriftService::generate(const std::string& user_id, const GenerateRequest& req) const {
  validate_user_id(user_id);
  auto prof = profile(user_id);
  if (!prof) prof = std::make_shared<const UserProfile>(UserProfile::fresh(user_id, catalog_, config_.subset_size));

  GenerateResult out;
  DriftConfig& cfg = out.config;
  cfg.beta = Beta(req.beta.value_or(config_.beta));
  cfg.sampler = req.sampler.value_or(config_.sampler);
  cfg.max_tokens = req.max_tokens.value_or(config_.max_tokens);
  const auto names = catalog_.names();
  if (req.unpersonalized) {
    cfg.weights = WeightVector::zero(names);
  } else if (req.weights) {
    auto w = *req.weights;
    if (w.size() != catalog_.size()) throw InvalidArgument("weights override has the wrong length");
    double norm = 0.0;
    for (double v : w) {
      if (!std::isfinite(v)) throw InvalidArgument("weights override must be finite");
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm <= kDegenerateNorm) {
      cfg.weights = WeightVector::zero(names);
    } else {
      if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        for (double& v : w) v /= norm;
      }
      cfg.weights = WeightVector(std::move(w), names);
      cfg.subset = select_attributes(cfg.weights, prof->subset_size);
    }
  } else {
    cfg.weights = prof->report.degenerate ? WeightVector::zero(names) : prof->report.p;
    cfg.subset = prof->selected;
  }
  out.unpersonalized = cfg.unpersonalized();
  out.generation = drift::generate(*llm_, *slm_, catalog_, cfg, req.prompt, req.seed);
  out.text = llm_->detokenize(out.generation.tokens);
  return out;
}

void DriftService::snapshot() {
  std::unique_lock lock(mu_);
  snapshot_locked();
}

void DriftService::snapshot_locked() {
  since_snapshot_ = 0;
  if (config_.data_dir.empty()) return;
  json profiles = json::array();
  for (const auto& [id, u] : profiles_) {
    profiles.push_back({{"user_id", u->user_id},
                        {"d", u->d},
                        {"n_pairs", u->n_pairs},
                        {"subset_size", u->subset_size},
                        {"updated_at_ms", u->updated_at_ms}});
  }
  const json snap{{"seq", seq_}, {"catalog_fp", catalog_.fingerprint()}, {"profiles", profiles}};
  const auto tmp = config_.data_dir / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << snap.dump() << '\n';
    if (!out) throw PreconditionError("cannot write snapshot");
  }
  std::filesystem::rename(tmp, config_.data_dir / "snapshot.json");
}

void DriftService::mount(httplib::Server& server) {
  server.Get("/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
               reply(res, 200,
                     {{"status", "ok"},
                      {"users", user_count()},
                      {"llm", llm_->fingerprint()},
                      {"slm", slm_->fingerprint()},
                      {"catalog_fp", catalog_.fingerprint()}});
             }));

  server.Get("/v1/catalog", guarded([this](const httplib::Request&, httplib::Response& res) {
               reply(res, 200, catalog_to_json(catalog_));
             }));

  server.Put(R"(/v1/users/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const bool created = create_user(id);
               reply(res, created ? 201 : 200, profile_to_json(*profile(id)));
             }));

  server.Get(R"(/v1/users/([^/]+)/profile)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               validate_user_id(id);
               const auto u = profile(id);
               if (!u) {
                 reply(res, 404, error_body("unknown user '" + id + "'"));
                 return;
               }
               reply(res, 200, profile_to_json(*u));
             }));

  server.Post(R"(/v1/users/([^/]+)/preference)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                const auto body = parse_body(req);
                PreferencePair pair;
                pair.prompt = optional_field<std::string>(body, "prompt").value_or("");
                pair.chosen = optional_field<std::string>(body, "chosen").value_or("");
                pair.rejected = optional_field<std::string>(body, "rejected").value_or("");
                pair.pair_id = optional_field<std::string>(body, "pair_id").value_or("");
                if (pair.pair_id.empty()) pair.pair_id = content_pair_id(pair);
                const auto report = update_preference(id, pair);
                auto out = solve_report_to_json(report, catalog_.names());
                out["user_id"] = id;
                out["pair_id"] = pair.pair_id;
                reply(res, 200, out);
              }));

  server.Post(R"(/v1/users/([^/]+)/generate)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                const auto body = parse_body(req);
                GenerateRequest g;
                g.prompt = optional_field<std::string>(body, "prompt").value_or("");
                if (g.prompt.empty()) throw InvalidArgument("prompt is required");
                g.seed = optional_field<std::uint64_t>(body, "seed").value_or(0);
                SamplerSpec s = config_.sampler;
                if (auto kind = optional_field<std::string>(body, "sampler")) s.kind = parse_sampler_kind(*kind);
                if (auto t = optional_field<double>(body, "temperature")) s.temperature = *t;
                if (auto k = optional_field<std::size_t>(body, "top_k")) s.top_k = *k;
                if (auto p = optional_field<double>(body, "top_p")) s.top_p = *p;
                s.validate();
                g.sampler = s;
                g.max_tokens = optional_field<std::size_t>(body, "max_tokens");
                g.beta = optional_field<double>(body, "beta");
                g.weights = optional_field<std::vector<double>>(body, "weights");
                g.unpersonalized = optional_field<bool>(body, "unpersonalized").value_or(false) ||
                                   req.get_header_value("X-Drift-Unpersonalized") == "1";
                const auto r = generate(id, g);

                json out{{"user_id", id},
                         {"text", r.text},
                         {"tokens", r.generation.tokens},
                         {"stopped_at_eos", r.generation.stopped_at_eos},
                         {"unpersonalized", r.unpersonalized},
                         {"seed", g.seed},
                         {"beta", r.config.beta.value()},
                         {"sampler", to_string(r.config.sampler.kind)},
                         {"temperature", r.config.sampler.temperature},
                         {"top_k", r.config.sampler.top_k},
                         {"top_p", r.config.sampler.top_p},
                         {"max_tokens", r.config.max_tokens},
                         {"weights", r.config.weights.values()},
                         {"subset", r.config.subset.indices}};
                if (req.has_param("trace") && req.get_param_value("trace") != "0") {
                  json traces = json::array();
                  for (std::size_t s = 0; s < r.generation.traces.size(); ++s) {
                    traces.push_back(trace_to_json(r.generation.traces[s], s));
                  }
                  out["traces"] = traces;
                }
                res.set_header("X-Drift-Unpersonalized", r.unpersonalized ? "1" : "0");
                if (r.generation.error) {
                  out["error"] = *r.generation.error;
                  reply(res, 502, out);
                  return;
                }
                reply(res, 200, out);
              }));

  if (config_.ui_dir) {
    if (!server.set_mount_point("/app", config_.ui_dir->string())) {
      throw InvalidArgument("UI directory " + config_.ui_dir->string() + " does not exist");
    }
  }
}

}  // namespace drift
