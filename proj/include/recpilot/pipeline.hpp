#pragma once

// Stage drivers behind the CLI. Every stage reads and writes files under one
// run directory:
//
//   config.json                  resolved configuration
//   dataset/{vocab.json,split.json,catalog.jsonl}
//   checkpoints/{sl.ckpt,rl.ckpt}
//   logs/{sl.jsonl,rl.jsonl,evolve.jsonl}
//   simulate/candidates/<user>.json
//   preferences/<user>.json
//   reports/<user>.{json,md}
//   eval/{metrics.json,per_user.csv}

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recpilot/catalog.hpp"
#include "recpilot/config.hpp"
#include "recpilot/decode.hpp"
#include "recpilot/eval.hpp"
#include "recpilot/ingest.hpp"
#include "recpilot/llm_provider.hpp"
#include "recpilot/policy.hpp"
#include "recpilot/preference.hpp"
#include "recpilot/ranking.hpp"

namespace recpilot::pipeline {

struct Run {
  config::RunConfig config;
  std::string dir;
  std::size_t jobs = 1;
};

/// <runs_root>/<UTC yyyymmdd-HHMMSS>_seed<seed>
std::string default_run_dir(const config::RunConfig& config);

/// Creates the directory and records the resolved configuration.
void prepare_run_dir(const Run& run);

/// Chat through the generator, embeddings through the embedder.
class RoutedProvider final : public llm::Provider {
 public:
  RoutedProvider(std::shared_ptr<llm::Provider> chat, std::shared_ptr<llm::Provider> embed)
      : chat_(std::move(chat)), embed_(std::move(embed)) {}
  llm::ChatResponse chat(const std::string& system_prompt, const std::string& user_prompt) override {
    return chat_->chat(system_prompt, user_prompt);
  }
  std::vector<double> embed(const std::string& text) override { return embed_->embed(text); }

 private:
  std::shared_ptr<llm::Provider> chat_;
  std::shared_ptr<llm::Provider> embed_;
};

struct Providers {
  std::shared_ptr<llm::Provider> agent;  // generator chat + embedder
  std::shared_ptr<llm::Provider> judge;
};

Providers make_providers(const config::ProviderRoles& roles);

struct Dataset {
  ingest::Vocabulary vocab;
  ingest::DatasetSplit split;
  catalog::ItemCatalog items;
};

Dataset load_dataset(const std::string& run_dir);

/// Tokenized (history, target) pairs from examples whose target is
/// format-valid.
policy::TrainingBatch training_pairs(std::span<const ingest::Example> examples,
                                     const ingest::Vocabulary& vocab,
                                     std::size_t max_history_sessions);

/// rl.ckpt when present, otherwise sl.ckpt.
policy::SequencePolicy load_latest_policy(const std::string& run_dir,
                                          const ingest::Vocabulary& vocab);

struct ReportArtifacts {
  ranking::IntentSummary intent;
  ranking::RankingResult ranked;
  ranking::Report report;
};

struct AgentOptions {
  double delta = preference::kDefaultDelta;
  int n_max = ranking::kDefaultMaxAspects;
  int experience_m = 3;
  int ndcg_k = 10;
  std::size_t jobs = 1;
};

AgentOptions agent_options(const config::RunConfig& config, std::size_t jobs);

/// Intent -> experience retrieval -> aspects -> rankings -> report.
ReportArtifacts build_report(const decode::CandidateSet& candidates,
                             const preference::PreferenceState& state,
                             const ingest::Vocabulary& vocab, const catalog::ItemCatalog& items,
                             const catalog::AttributeCatalog& attributes, llm::Provider& provider,
                             const AgentOptions& options);

struct SessionOutcome {
  bool low_level = false;
  double overall_ndcg = 0.0;  // L_0 under the weights before this session's update
  std::optional<std::size_t> winner;
  std::size_t entries_added = 0;
};

/// The candidate pool used while replaying a session: simulator candidates
/// plus the session's own items, scored as a direct purchase when missing.
decode::CandidateSet replay_candidates(const policy::SequencePolicy& policy,
                                       std::span<const Token> history,
                                       const ingest::Session& target,
                                       const ingest::Vocabulary& vocab,
                                       const decode::SamplerConfig& sampler, std::uint64_t seed);

/// One self-evolution step for `state` on an observed session.
SessionOutcome evolve_session(preference::PreferenceState& state, const policy::SequencePolicy& policy,
                              std::span<const Token> history, const ingest::Session& target,
                              const ingest::Vocabulary& vocab, const catalog::ItemCatalog& items,
                              const catalog::AttributeCatalog& attributes, llm::Provider& provider,
                              const decode::SamplerConfig& sampler, const AgentOptions& options,
                              std::uint64_t seed);

// Stages. Each returns a one-line human summary.
std::string run_ingest(const Run& run);
std::string run_train_sl(const Run& run);
std::string run_train_rl(const Run& run);
std::string run_simulate(const Run& run);
std::string run_report(const Run& run);
std::string run_evolve(const Run& run);
std::string run_eval(const Run& run);

}  // namespace recpilot::pipeline
