#pragma once

// Rule-based trajectory rewards, group-relative advantages and the clipped
// sequence-level policy-gradient update.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/decode.hpp"
#include "recpilot/policy.hpp"

namespace recpilot::rl {

using policy::Matrix;
using policy::PolicyGradient;
using policy::SequencePolicy;
using tokenizer::Trajectory;

struct RewardBreakdown {
  double outcome = 0.0;     // {0, 1}
  double process = 0.0;     // [-1, 1]
  double length = 0.0;      // (0, 1]
  double format = 0.0;      // {0, -1}
  double constraint = 0.0;  // length + format
  double total = 0.0;       // outcome + process + constraint

  nlohmann::json to_json() const;
};

inline constexpr double kDefaultLengthMu = 0.2;

/// 1 when a prediction exists and equals the true item.
double outcome_reward(std::optional<Token> predicted, Token truth);

/// Mean over generated items of their best cosine similarity against any true
/// item, using rows of `embeddings`. Zero for an empty generation; pairs with a
/// zero-norm row contribute similarity 0.
double process_reward(std::span<const Token> generated_items, std::span<const Token> true_items,
                      const Matrix& embeddings);

struct ConstraintReward {
  double length = 0.0;
  double format = 0.0;
  double total = 0.0;
};

/// Length term compares item-token counts: exp(-mu * |L_gen - L_label|).
ConstraintReward constraint_reward(std::span<const Token> tokens, std::span<const Token> label,
                                   double mu);

/// `label` must be format-valid.
RewardBreakdown reward_breakdown(std::span<const Token> generated, std::span<const Token> label,
                                 const Matrix& embeddings, double mu = kDefaultLengthMu);

/// (r - mean) / population std; all zeros when std < 1e-8.
std::vector<double> group_advantages(std::span<const double> rewards);

inline constexpr double kLogRatioClamp = 20.0;

struct GrpoConfig {
  int group_size = 8;  // G
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double mu_length = kDefaultLengthMu;
  double lr = 0.01;
  double clip_norm = policy::kDefaultClipNorm;
  int steps = 200;
  int rollouts_per_step = 8;  // histories per update
  // Copy the current policy into the reference every this many steps; 0 keeps
  // the reference frozen at its starting point.
  int ref_refresh_every = 0;
  double p = 1.0;
  double tau = 1.0;
  int max_len = 16;

  void validate() const;
  decode::SamplerConfig sampler() const;
};

struct GroupRollout {
  Trajectory history;
  Trajectory label;
  std::vector<Trajectory> trajectories;
  std::vector<double> logp_policy;
  std::vector<double> logp_ref;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;

  std::size_t size() const { return trajectories.size(); }
};

/// Samples G trajectories from `policy` (draw i seeded by derive_seed(seed, i)),
/// scores them against `label` with `reward_embeddings` and normalizes rewards
/// within the group.
GroupRollout collect_rollout(const SequencePolicy& policy, const SequencePolicy& ref,
                             std::span<const Token> history, std::span<const Token> label,
                             const Matrix& reward_embeddings, const GrpoConfig& config,
                             std::uint64_t seed);

/// Rebuilds advantages from the stored rewards.
void recompute_advantages(GroupRollout& rollout);

struct ObjectiveValue {
  double objective = 0.0;  // surrogate - beta * kl, averaged over groups
  double surrogate = 0.0;
  double kl = 0.0;
  std::size_t excluded = 0;  // trajectories dropped for non-finite ratios
};

/// Clipped surrogate with sequence-level ratios rho = pi_theta / pi_ref,
/// re-evaluated under the current parameters. When `grad` is set it receives
/// the gradient of the objective (ascent direction).
ObjectiveValue grpo_objective(const SequencePolicy& policy, const SequencePolicy& ref,
                              std::span<const GroupRollout> rollouts, const GrpoConfig& config,
                              PolicyGradient* grad = nullptr);

/// One clipped gradient-ascent step. Returns the objective before the update.
ObjectiveValue grpo_step(SequencePolicy& policy, const SequencePolicy& ref,
                         std::span<const GroupRollout> rollouts, const GrpoConfig& config);

/// (history, label) pair used as a rollout prompt.
using Prompt = policy::TrainingPair;

struct StepLog {
  int step = 0;
  double mean_reward = 0.0;
  RewardBreakdown components;  // group means
  double objective = 0.0;
  double kl = 0.0;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::function<void(const StepLog&)> on_step;
};

/// GRPO loop. Each step draws `rollouts_per_step` prompts, samples their groups
/// in parallel against a frozen snapshot and applies one update. Rewards use
/// the initial reference embeddings throughout.
std::vector<StepLog> train_grpo(SequencePolicy& policy, std::span<const Prompt> prompts,
                                const GrpoConfig& config, const TrainOptions& options);

/// Mean total reward of `samples` draws per prompt (no update).
RewardBreakdown mean_reward(const SequencePolicy& policy, std::span<const Prompt> prompts,
                            const Matrix& reward_embeddings, const GrpoConfig& config,
                            int samples, std::uint64_t seed, std::size_t jobs = 1);

}  // namespace recpilot::rl
