#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "recpilot/policy.hpp"

namespace recpilot::decode {

using policy::SequencePolicy;
using policy::Vector;
using tokenizer::Trajectory;

struct SamplerConfig {
  double p = 0.9;
  double tau = 1.0;
  int num_trajectories = 8;  // N
  int top_k = 10;            // K
  int max_len = 16;          // total tokens including <bos>
  std::uint64_t seed = 0;
  bool length_normalize = false;

  void validate() const;
};

/// Temperature-scaled softmax restricted to the smallest descending-probability
/// prefix with cumulative mass >= p (never empty), renormalized. Returned over
/// the full vocabulary with zeros outside the nucleus. Ties in probability are
/// ordered by lower token index.
std::vector<double> nucleus_distribution(const Vector& logits, double p, double tau);

double entropy(std::span<const double> distribution);

/// Autoregressive draw starting after <bos>; stops at <eos> or when the
/// stream reaches max_len tokens. The result includes the leading <bos>.
Trajectory sample_trajectory(const SequencePolicy& policy, std::span<const Token> history,
                             const SamplerConfig& config, std::mt19937_64& rng);

/// N draws; draw i uses its own generator seeded with derive_seed(seed, i).
std::vector<Trajectory> sample_trajectories(const SequencePolicy& policy,
                                            std::span<const Token> history,
                                            const SamplerConfig& config, std::uint64_t seed);

/// The exploration part of a sampled stream, ending in <purchase> so the next
/// token is the decision item: a trailing <eos> and any items of a terminal
/// purchase segment are removed, and <purchase> is appended when missing.
Trajectory exploration_prefix(std::span<const Token> trajectory);

/// Items ranked by dot product between the final decoder state and their
/// embeddings; ties by lower token index. Returns every item when K exceeds
/// the item count.
std::vector<Token> retrieve_topk(const SequencePolicy& policy, std::span<const Token> history,
                                 std::span<const Token> trajectory, int k);

struct Candidate {
  Token item = 0;
  double score = 0.0;     // log-likelihood of trajectory (optionally per token)
  Trajectory trajectory;  // exploration prefix + item
};

struct CandidateSet {
  std::vector<Candidate> candidates;  // distinct items, score descending

  std::vector<Token> items() const;
  bool empty() const { return candidates.empty(); }
};

/// Pools top-K retrievals of every trajectory, scores each (trajectory, item)
/// pair by the log-likelihood of exploration_prefix(trajectory) + item, keeps
/// the best occurrence per item (earliest trajectory on ties) and returns the
/// K best by score (ties by lower token index).
CandidateSet candidates_from_trajectories(const SequencePolicy& policy,
                                          std::span<const Token> history,
                                          std::span<const Trajectory> trajectories, int k,
                                          bool length_normalize = false);

CandidateSet build_candidate_set(const SequencePolicy& policy, std::span<const Token> history,
                                 const SamplerConfig& config, std::uint64_t seed);

/// [{item_id, score, trajectory:[symbols]}]
nlohmann::json candidate_set_to_json(const CandidateSet& set, const ingest::Vocabulary& vocab);
CandidateSet candidate_set_from_json(const nlohmann::json& doc, const ingest::Vocabulary& vocab);

}  // namespace recpilot::decode
