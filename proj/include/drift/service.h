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
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "drift/approximation.h"
#include "drift/core.h"
#include "drift/decoding.h"
#include "drift/lm_backend.h"
#include "drift/rewarding.h"

namespace httplib {
class Server;
}

namespace drift {

struct ServiceConfig {
  // Empty keeps all state in memory.
  std::filesystem::path data_dir;
  std::size_t subset_size = kDefaultSubsetSize;
  double beta = 0.5;
  SamplerSpec sampler;
  std::size_t max_tokens = kDefaultMaxTokens;
  // A snapshot is written after this many logged events; 0 disables.
  std::size_t snapshot_every = 256;
  RewardOptions reward;
  // Served under /app when set.
  std::optional<std::filesystem::path> ui_dir;

  // DRIFT_DATA_DIR, DRIFT_UI_DIR.
  static ServiceConfig from_env();
};

// DRIFT_PORT, default 8787.
int service_port_from_env();

struct GenerateRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  std::optional<SamplerSpec> sampler;
  std::optional<std::size_t> max_tokens;
  std::optional<double> beta;
  // Full-catalog weights used for this request only; re-normalized unless
  // already unit-norm.
  std::optional<std::vector<double>> weights;
  bool unpersonalized = false;
};

struct GenerateResult {
  Generation generation;
  std::string text;
  bool unpersonalized = false;
  DriftConfig config;
};

// Profile store plus the Drift pipeline behind the /v1 API.
//
// On disk (data_dir):
//   events.jsonl   {"seq", "type": "create"|"append", "user_id", ["pair_id", "w_row", "l_row"]}
//   snapshot.json  {"seq", "catalog_fp", "profiles": [...]}
//   features.jsonl reward-row cache
// Start-up loads the snapshot and replays events with a larger seq.
class DriftService {
 public:
  DriftService(std::shared_ptr<const LmBackend> llm, std::shared_ptr<const LmBackend> slm,
               AttributeCatalog catalog, ServiceConfig config = {});

  const AttributeCatalog& catalog() const { return catalog_; }
  const ServiceConfig& config() const { return config_; }

  // Creates a fresh profile; returns false if it already existed.
  bool create_user(const std::string& user_id);

  // Scores the pair, folds its rows into the user's profile (auto-created)
  // and persists the event.
  SolveReport update_preference(const std::string& user_id, const PreferencePair& pair);
  // Same, with precomputed rows.
  SolveReport append_rows(const std::string& user_id, const std::string& pair_id,
                          const RewardRowPair& rows);

  // Immutable snapshot, or nullptr for an unknown user.
  std::shared_ptr<const UserProfile> profile(const std::string& user_id) const;
  std::size_t user_count() const;

  // Unknown users and degenerate profiles decode unpersonalized.
  GenerateResult generate(const std::string& user_id, const GenerateRequest& req) const;

  // Writes snapshot.json; no-op without a data_dir.
  void snapshot();
  std::uint64_t last_seq() const;

  // Registers every /v1 route and the /app mount.
  void mount(httplib::Server& server);

 private:
  void load();
  void apply_locked(const std::string& user_id, const std::string& pair_id,
                    const RewardRowPair* rows, std::int64_t at_ms);
  void log_event_locked(const nlohmann::json& event);
  void snapshot_locked();

  std::shared_ptr<const LmBackend> llm_;
  std::shared_ptr<const LmBackend> slm_;
  AttributeCatalog catalog_;
  ServiceConfig config_;
  std::unique_ptr<FeatureCache> cache_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const UserProfile>> profiles_;
  std::uint64_t seq_ = 0;
  std::size_t since_snapshot_ = 0;
};

nlohmann::json profile_to_json(const UserProfile& profile);
nlohmann::json solve_report_to_json(const SolveReport& report,
                                    const std::vector<std::string>& names);
// {"fingerprint", "base": {"name", "system_prompt"}, "attributes": [...]}
nlohmann::json catalog_to_json(const AttributeCatalog& catalog);
AttributeCatalog catalog_from_json(const nlohmann::json& j);
AttributeCatalog load_catalog(const std::filesystem::path& path);
// Inverse of the persisted profile fields {"user_id", "d", "n_pairs",
// "subset_size", "updated_at_ms"}; p and the subset are re-solved from d.
UserProfile profile_from_json(const nlohmann::json& j, const AttributeCatalog& catalog);

// HTTP status for a library error: 400 invalid input, 422 precondition,
// 502 backend transport or capability, 500 numeric.
int http_status_for(ErrorKind kind);

}  // namespace drift
