#include "recpilot/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace recpilot::rl {

using ingest::Vocabulary;

nlohmann::json RewardBreakdown::to_json() const {
  return {{"outcome", outcome}, {"process", process},       {"length", length},
          {"format", format},   {"constraint", constraint}, {"total", total}};
}

double outcome_reward(std::optional<Token> predicted, Token truth) {
  return predicted && *predicted == truth ? 1.0 : 0.0;
}

double process_reward(std::span<const Token> generated_items, std::span<const Token> true_items,
                      const Matrix& embeddings) {
  if (true_items.empty()) throw PreconditionError("process_reward: empty ground-truth item list");
  if (generated_items.empty()) return 0.0;
  auto row = [&](Token t) {
    if (t < 0 || t >= embeddings.rows()) {
      throw PreconditionError("process_reward: token " + std::to_string(t) + " out of range");
    }
    return embeddings.row(t);
  };
  double sum = 0.0;
  for (Token g : generated_items) {
    const auto eg = row(g);
    const double ng = eg.norm();
    double best = -1.0;
    for (Token t : true_items) {
      const auto et = row(t);
      const double nt = et.norm();
      const double sim = (ng == 0.0 || nt == 0.0) ? 0.0 : eg.dot(et) / (ng * nt);
      best = std::max(best, sim);
    }
    sum += std::clamp(best, -1.0, 1.0);
  }
  return sum / static_cast<double>(generated_items.size());
}

ConstraintReward constraint_reward(std::span<const Token> tokens, std::span<const Token> label,
                                   double mu) {
  if (!(mu > 0.0)) throw PreconditionError("constraint_reward: mu must be > 0");
  const auto count = [](std::span<const Token> ts) {
    return static_cast<double>(std::count_if(ts.begin(), ts.end(), Vocabulary::is_item));
  };
  ConstraintReward r;
  r.length = std::exp(-mu * std::abs(count(tokens) - count(label)));
  r.format = tokenizer::validate_format(tokens).ok() ? 0.0 : -1.0;
  r.total = r.length + r.format;
  return r;
}

RewardBreakdown reward_breakdown(std::span<const Token> generated, std::span<const Token> label,
                                 const Matrix& embeddings, double mu) {
  const auto truth = tokenizer::predicted_final_item(label);
  if (!truth) throw PreconditionError("reward_breakdown: label trajectory is not format-valid");
  RewardBreakdown r;
  r.outcome = outcome_reward(tokenizer::predicted_final_item(generated), *truth);
  const auto gen_items = tokenizer::item_tokens(generated);
  const auto true_items = tokenizer::item_tokens(label);
  r.process = process_reward(gen_items, true_items, embeddings);
  const auto c = constraint_reward(generated, label, mu);
  r.length = c.length;
  r.format = c.format;
  r.constraint = c.total;
  r.total = r.outcome + r.process + r.constraint;
  return r;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw PreconditionError("group_advantages: group size must be >= 2");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw PreconditionError("grpo: G must be >= 2");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw PreconditionError("grpo: clip_epsilon must be in (0, 1)");
  }
  if (!(kl_beta >= 0.0)) throw PreconditionError("grpo: kl_beta must be >= 0");
  if (!(mu_length > 0.0)) throw PreconditionError("grpo: mu_length must be > 0");
  if (!(lr > 0.0)) throw PreconditionError("grpo: lr must be > 0");
  if (rollouts_per_step < 1) throw PreconditionError("grpo: rollouts_per_step must be >= 1");
  if (steps < 0) throw PreconditionError("grpo: steps must be >= 0");
  if (ref_refresh_every < 0) throw PreconditionError("grpo: ref_refresh_every must be >= 0");
  sampler().validate();
}

decode::SamplerConfig GrpoConfig::sampler() const {
  decode::SamplerConfig s;
  s.p = p;
  s.tau = tau;
  s.max_len = max_len;
  s.num_trajectories = group_size;
  return s;
}

GroupRollout collect_rollout(const SequencePolicy& policy, const SequencePolicy& ref,
                             std::span<const Token> history, std::span<const Token> label,
                             const Matrix& reward_embeddings, const GrpoConfig& config,
                             std::uint64_t seed) {
  GroupRollout g;
  g.history.assign(history.begin(), history.end());
  g.label.assign(label.begin(), label.end());
  g.trajectories = decode::sample_trajectories(policy, history, config.sampler(), seed);
  for (const auto& t : g.trajectories) {
    g.logp_policy.push_back(policy::trajectory_log_likelihood(policy, history, t));
    g.logp_ref.push_back(policy::trajectory_log_likelihood(ref, history, t));
    g.rewards.push_back(reward_breakdown(t, label, reward_embeddings, config.mu_length));
  }
  recompute_advantages(g);
  return g;
}

void recompute_advantages(GroupRollout& rollout) {
  std::vector<double> totals;
  totals.reserve(rollout.rewards.size());
  for (const auto& r : rollout.rewards) totals.push_back(r.total);
  rollout.advantages = group_advantages(totals);
}

ObjectiveValue grpo_objective(const SequencePolicy& policy, const SequencePolicy& ref,
                              std::span<const GroupRollout> rollouts, const GrpoConfig& config,
                              PolicyGradient* grad) {
  ObjectiveValue out;
  if (grad) {
    *grad = PolicyGradient(policy.vocab_size(), policy.dim());
  }
  std::size_t groups = 0;
  struct Term {
    std::size_t index;
    double log_ratio;
    double rho;
    bool active;
  };
  std::vector<std::vector<Term>> kept(rollouts.size());
  for (std::size_t g = 0; g < rollouts.size(); ++g) {
    const auto& r = rollouts[g];
    if (r.advantages.size() != r.size()) {
      throw PreconditionError("grpo_objective: rollout advantages not computed");
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double lp = policy::trajectory_log_likelihood(policy, r.history, r.trajectories[i]);
      const double lr = policy::trajectory_log_likelihood(ref, r.history, r.trajectories[i]);
      const double log_ratio = lp - lr;
      if (!std::isfinite(log_ratio)) {
        spdlog::warn("grpo: non-finite likelihood ratio, trajectory {} of group {} excluded", i, g);
        ++out.excluded;
        continue;
      }
      const double clamped = std::clamp(log_ratio, -kLogRatioClamp, kLogRatioClamp);
      kept[g].push_back({i, log_ratio, std::exp(clamped), clamped == log_ratio});
    }
    if (!kept[g].empty()) ++groups;
  }
  if (groups == 0) return out;

  const double eps = config.clip_epsilon;
  for (std::size_t g = 0; g < rollouts.size(); ++g) {
    if (kept[g].empty()) continue;
    const auto& r = rollouts[g];
    const double n = static_cast<double>(kept[g].size());
    double surrogate = 0.0;
    double kl = 0.0;
    for (const auto& t : kept[g]) {
      const double a = r.advantages[t.index];
      const double unclipped = t.rho * a;
      const double clipped = std::clamp(t.rho, 1.0 - eps, 1.0 + eps) * a;
      surrogate += std::min(unclipped, clipped);
      kl += t.log_ratio;
      if (grad) {
        // The clipped branch is flat in theta; only the ratio branch carries gradient.
        const double ratio_weight = (unclipped <= clipped && t.active) ? a * t.rho : 0.0;
        const double w = (ratio_weight - config.kl_beta) / (n * static_cast<double>(groups));
        if (w != 0.0) {
          policy::trajectory_log_likelihood(policy, r.history, r.trajectories[t.index], grad, w);
        }
      }
    }
    out.surrogate += surrogate / n;
    out.kl += kl / n;
  }
  out.surrogate /= static_cast<double>(groups);
  out.kl /= static_cast<double>(groups);
  out.objective = out.surrogate - config.kl_beta * out.kl;
  return out;
}

ObjectiveValue grpo_step(SequencePolicy& policy, const SequencePolicy& ref,
                         std::span<const GroupRollout> rollouts, const GrpoConfig& config) {
  PolicyGradient grad;
  const auto value = grpo_objective(policy, ref, rollouts, config, &grad);
  if (!std::isfinite(value.objective) || !grad.all_finite()) {
    throw policy::DivergenceError("grpo: objective or gradient is not finite");
  }
  policy::clip_gradient(grad, config.clip_norm);
  policy.apply(grad, config.lr);
  return value;
}

nlohmann::json StepLog::to_json() const {
  return {{"step", step},
          {"mean_reward", mean_reward},
          {"components", components.to_json()},
          {"objective", objective},
          {"kl", kl}};
}

namespace {

void accumulate(RewardBreakdown& acc, const RewardBreakdown& r) {
  acc.outcome += r.outcome;
  acc.process += r.process;
  acc.length += r.length;
  acc.format += r.format;
  acc.constraint += r.constraint;
  acc.total += r.total;
}

void divide(RewardBreakdown& acc, double n) {
  acc.outcome /= n;
  acc.process /= n;
  acc.length /= n;
  acc.format /= n;
  acc.constraint /= n;
  acc.total /= n;
}

}  // namespace

std::vector<StepLog> train_grpo(SequencePolicy& policy, std::span<const Prompt> prompts,
                                const GrpoConfig& config, const TrainOptions& options) {
  config.validate();
  if (prompts.empty()) throw PreconditionError("train_grpo: no training prompts");
  SequencePolicy ref = policy;
  const Matrix reward_embeddings = ref.embeddings();
  std::vector<StepLog> logs;
  logs.reserve(static_cast<std::size_t>(config.steps));
  const auto batch = static_cast<std::size_t>(config.rollouts_per_step);
  for (int step = 0; step < config.steps; ++step) {
    const std::uint64_t step_seed = derive_seed(options.seed, static_cast<std::uint64_t>(step));
    std::mt19937_64 pick(step_seed);
    std::uniform_int_distribution<std::size_t> index(0, prompts.size() - 1);
    std::vector<std::size_t> chosen(batch);
    for (auto& c : chosen) c = index(pick);

    std::vector<GroupRollout> rollouts(batch);
    const SequencePolicy& snapshot = policy;
    parallel_for(batch, options.jobs, [&](std::size_t b) {
      const auto& pr = prompts[chosen[b]];
      rollouts[b] = collect_rollout(snapshot, ref, pr.history, pr.target, reward_embeddings,
                                    config, derive_seed(step_seed, static_cast<std::uint64_t>(b)));
    });

    StepLog log;
    log.step = step;
    double count = 0.0;
    for (const auto& r : rollouts) {
      for (const auto& rb : r.rewards) {
        accumulate(log.components, rb);
        count += 1.0;
      }
    }
    divide(log.components, count);
    log.mean_reward = log.components.total;

    const auto value = grpo_step(policy, ref, rollouts, config);
    log.objective = value.objective;
    log.kl = value.kl;
    if (options.on_step) options.on_step(log);
    logs.push_back(log);

    if (config.ref_refresh_every > 0 && (step + 1) % config.ref_refresh_every == 0) {
      ref = policy;
    }
  }
  return logs;
}

RewardBreakdown mean_reward(const SequencePolicy& policy, std::span<const Prompt> prompts,
                            const Matrix& reward_embeddings, const GrpoConfig& config,
                            int samples, std::uint64_t seed, std::size_t jobs) {
  if (prompts.empty()) throw PreconditionError("mean_reward: no prompts");
  if (samples < 1) throw PreconditionError("mean_reward: samples must be >= 1");
  auto sampler = config.sampler();
  sampler.num_trajectories = samples;
  std::vector<RewardBreakdown> per_prompt(prompts.size());
  parallel_for(prompts.size(), jobs, [&](std::size_t i) {
    const auto trajs = decode::sample_trajectories(policy, prompts[i].history, sampler,
                                                   derive_seed(seed, static_cast<std::uint64_t>(i)));
    RewardBreakdown acc;
    for (const auto& t : trajs) {
      accumulate(acc, reward_breakdown(t, prompts[i].target, reward_embeddings, config.mu_length));
    }
    divide(acc, static_cast<double>(trajs.size()));
    per_prompt[i] = acc;
  });
  RewardBreakdown total;
  for (const auto& r : per_prompt) accumulate(total, r);
  divide(total, static_cast<double>(prompts.size()));
  return total;
}

}  // namespace recpilot::rl
