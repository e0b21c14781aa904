#pragma once

// Run configuration: one JSON document plus dotted-path overrides.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/decode.hpp"
#include "recpilot/llm_provider.hpp"
#include "recpilot/rl.hpp"

namespace recpilot::config {

/// Unreadable, unparsable or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataConfig {
  std::string interactions;  // TSV path
  std::string catalog;       // item metadata JSONL path; optional
  bool header = false;
  std::size_t min_count = 5;
  std::size_t max_history_sessions = 0;  // 0 = unlimited
};

struct PolicyConfig {
  int dim = 32;
  int sl_steps = 300;
  double sl_lr = 2.0;
  double clip_norm = policy::kDefaultClipNorm;
};

struct PreferenceConfig {
  double delta = 0.2;
  int n_max = 3;
  int experience_m = 3;
  int ndcg_k = 10;
};

struct EvalConfig {
  std::vector<int> k = {5, 10};
  bool judge_reports = true;
};

struct ProviderRoles {
  llm::ProviderConfig generator;
  llm::ProviderConfig embedder;
  llm::ProviderConfig judge;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string runs_root = "runs";
  DataConfig data;
  PolicyConfig policy;
  decode::SamplerConfig sampler;
  rl::GrpoConfig grpo;
  ProviderRoles providers;
  PreferenceConfig preference;
  EvalConfig eval;

  void validate() const;
};

/// Sets the value at a dotted path ("sampler.p=0.95"). The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);

/// Reads `path`, applies overrides in order and validates. Relative data
/// paths are resolved against the config file's directory.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace recpilot::config
