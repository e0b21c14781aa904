#include "recpilot/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace recpilot::decode {

using ingest::Vocabulary;

void SamplerConfig::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("sampler: p must be in (0, 1]");
  if (!(tau > 0.0)) throw PreconditionError("sampler: tau must be > 0");
  if (num_trajectories < 1) throw PreconditionError("sampler: N must be >= 1");
  if (top_k < 1) throw PreconditionError("sampler: K must be >= 1");
  if (max_len < 2) throw PreconditionError("sampler: max_len must be >= 2");
}

std::vector<double> nucleus_distribution(const Vector& logits, double p, double tau) {
  const Vector probs = policy::softmax(logits / tau);
  const auto n = static_cast<std::size_t>(probs.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<double> out(n, 0.0);
  double mass = 0.0;
  std::size_t kept = 0;
  while (kept < n) {
    mass += probs[order[kept]];
    ++kept;
    if (mass >= p) break;
  }
  for (std::size_t i = 0; i < kept; ++i) out[order[i]] = probs[order[i]] / mass;
  return out;
}

double entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double q : distribution) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

namespace {

Token draw(std::span<const double> distribution, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  Token last_nonzero = 0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] <= 0.0) continue;
    acc += distribution[i];
    last_nonzero = static_cast<Token>(i);
    if (u < acc) return last_nonzero;
  }
  return last_nonzero;
}

}  // namespace

Trajectory sample_trajectory(const SequencePolicy& policy, std::span<const Token> history,
                             const SamplerConfig& config, std::mt19937_64& rng) {
  config.validate();
  const Vector context = policy.history_context(history);
  Trajectory out{Vocabulary::kBos};
  Vector prefix_sum = policy.embeddings().row(Vocabulary::kBos).transpose();
  while (static_cast<int>(out.size()) < config.max_len) {
    const Vector s = context + prefix_sum / static_cast<double>(out.size());
    const auto dist = nucleus_distribution(policy.logits_from_state(s), config.p, config.tau);
    const Token next = draw(dist, rng);
    out.push_back(next);
    if (next == Vocabulary::kEos) break;
    prefix_sum += policy.embeddings().row(next).transpose();
  }
  return out;
}

std::vector<Trajectory> sample_trajectories(const SequencePolicy& policy,
                                            std::span<const Token> history,
                                            const SamplerConfig& config, std::uint64_t seed) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(config.num_trajectories));
  for (int i = 0; i < config.num_trajectories; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(sample_trajectory(policy, history, config, rng));
  }
  return out;
}

Trajectory exploration_prefix(std::span<const Token> trajectory) {
  Trajectory out(trajectory.begin(), trajectory.end());
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  std::size_t last_action = out.size();
  for (std::size_t i = out.size(); i-- > 0;) {
    if (Vocabulary::is_action(out[i])) {
      last_action = i;
      break;
    }
  }
  const bool terminal_purchase =
      last_action < out.size() && out[last_action] == Vocabulary::kPurchase &&
      std::all_of(out.begin() + static_cast<std::ptrdiff_t>(last_action) + 1, out.end(),
                  [](Token t) { return Vocabulary::is_item(t); });
  if (terminal_purchase) {
    out.resize(last_action + 1);
  } else {
    out.push_back(Vocabulary::kPurchase);
  }
  return out;
}

std::vector<Token> retrieve_topk(const SequencePolicy& policy, std::span<const Token> history,
                                 std::span<const Token> trajectory, int k) {
  if (k < 1) throw PreconditionError("retrieve_topk: K must be >= 1");
  const Vector state = policy::final_hidden_state(policy, history, trajectory);
  const auto first = static_cast<Eigen::Index>(Vocabulary::kFirstItem);
  const auto n_items = policy.embeddings().rows() - first;
  if (n_items <= 0) return {};
  const Vector sims = policy.embeddings().bottomRows(n_items) * state;
  std::vector<Token> order(static_cast<std::size_t>(n_items));
  std::iota(order.begin(), order.end(), Vocabulary::kFirstItem);
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Token a, Token b) {
                      const double sa = sims[a - first];
                      const double sb = sims[b - first];
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

std::vector<Token> CandidateSet::items() const {
  std::vector<Token> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(c.item);
  return out;
}

CandidateSet candidates_from_trajectories(const SequencePolicy& policy,
                                          std::span<const Token> history,
                                          std::span<const Trajectory> trajectories, int k,
                                          bool length_normalize) {
  std::unordered_map<Token, Candidate> best;
  for (const auto& traj : trajectories) {
    const Trajectory prefix = exploration_prefix(traj);
    for (Token item : retrieve_topk(policy, history, prefix, k)) {
      Trajectory full = prefix;
      full.push_back(item);
      double score = policy::trajectory_log_likelihood(policy, history, full);
      if (length_normalize) score /= static_cast<double>(full.size() - 1);
      auto it = best.find(item);
      // Strictly greater keeps the earliest trajectory on equal scores.
      if (it == best.end()) {
        best.emplace(item, Candidate{item, score, std::move(full)});
      } else if (score > it->second.score) {
        it->second = Candidate{item, score, std::move(full)};
      }
    }
  }
  CandidateSet set;
  set.candidates.reserve(best.size());
  for (auto& [item, cand] : best) set.candidates.push_back(std::move(cand));
  std::sort(set.candidates.begin(), set.candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  if (set.candidates.size() > static_cast<std::size_t>(k)) {
    set.candidates.resize(static_cast<std::size_t>(k));
  }
  return set;
}

CandidateSet build_candidate_set(const SequencePolicy& policy, std::span<const Token> history,
                                 const SamplerConfig& config, std::uint64_t seed) {
  const auto trajectories = sample_trajectories(policy, history, config, seed);
  return candidates_from_trajectories(policy, history, trajectories, config.top_k,
                                      config.length_normalize);
}

nlohmann::json candidate_set_to_json(const CandidateSet& set, const Vocabulary& vocab) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : set.candidates) {
    arr.push_back({{"item_id", vocab.symbol(c.item)},
                   {"score", c.score},
                   {"trajectory", tokenizer::to_symbols(c.trajectory, vocab)}});
  }
  return arr;
}

CandidateSet candidate_set_from_json(const nlohmann::json& doc, const Vocabulary& vocab) {
  CandidateSet set;
  for (const auto& c : doc) {
    Candidate cand;
    cand.item = vocab.item_token(c.at("item_id").get<std::string>());
    cand.score = c.at("score").get<double>();
    for (const auto& sym : c.at("trajectory")) {
      const auto s = sym.get<std::string>();
      const auto t = vocab.token_of(s);
      if (!t) throw ParseError("candidate trajectory: unknown symbol '" + s + "'");
      cand.trajectory.push_back(*t);
    }
    set.candidates.push_back(std::move(cand));
  }
  return set;
}

}  // namespace recpilot::decode
