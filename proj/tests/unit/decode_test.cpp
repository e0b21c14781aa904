#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "recpilot/decode.hpp"
#include "support/fixtures.hpp"

namespace recpilot::decode {
namespace {

using ingest::Vocabulary;
constexpr Token B = Vocabulary::kBos, E = Vocabulary::kEos, CL = Vocabulary::kClick,
                P = Vocabulary::kPurchase;

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(Nucleus, HandTruncation) {
  const auto d = nucleus_distribution(vec({std::log(0.5), std::log(0.3), std::log(0.2)}), 0.7, 1.0);
  EXPECT_NEAR(d[0], 0.625, 1e-12);
  EXPECT_NEAR(d[1], 0.375, 1e-12);
  EXPECT_EQ(d[2], 0.0);
}

TEST(Nucleus, FullMassIsSoftmaxAndTinyMassIsGreedy) {
  const Vector logits = vec({0.1, 1.3, -0.4, 0.9});
  const auto full = nucleus_distribution(logits, 1.0, 1.0);
  const Vector sm = policy::softmax(logits);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(full[i], sm(i), 1e-12);
  const auto greedy = nucleus_distribution(logits, 1e-9, 1.0);
  EXPECT_EQ(greedy[1], 1.0);
  // Equal probabilities: the lower index enters the nucleus first.
  const auto tie = nucleus_distribution(vec({0.0, 0.0, 0.0}), 0.2, 1.0);
  EXPECT_EQ(tie[0], 1.0);
}

TEST(Nucleus, AlwaysNonemptyAndNormalized) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 3);
  for (int t = 0; t < 300; ++t) {
    Vector l(10);
    for (int i = 0; i < 10; ++i) l(i) = n(rng);
    const double p = std::uniform_real_distribution<double>(1e-6, 1.0)(rng);
    const auto d = nucleus_distribution(l, p, std::uniform_real_distribution<double>(0.2, 3.0)(rng));
    double s = 0.0;
    int nz = 0;
    for (double x : d) {
      s += x;
      nz += x > 0;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_GE(nz, 1);
  }
}

TEST(Nucleus, EntropyGrowsWithTemperature) {
  const Vector l = vec({2.0, 1.0, 0.5, -1.0, 0.0});
  double prev = -1.0;
  for (double tau : {0.5, 1.0, 2.0}) {
    const double h = entropy(nucleus_distribution(l, 0.9, tau));
    EXPECT_GE(h, prev);
    prev = h;
  }
}

// Three-symbol toy: vocabulary of bos, eos, click, collect, cart, purchase and
// one item, with a bias that spreads mass over click / purchase / eos.
policy::SequencePolicy toy_policy() {
  policy::SequencePolicy p(7, 2);
  p.bias().setConstant(-50.0);
  p.bias()(CL) = std::log(0.5);
  p.bias()(P) = std::log(0.3);
  p.bias()(E) = std::log(0.2);
  return p;
}

TEST(SampleTrajectory, EmpiricalFrequenciesMatchNucleus) {
  const auto p = toy_policy();
  SamplerConfig c;
  c.p = 1.0;
  c.max_len = 2;
  c.num_trajectories = 3000;
  const auto trajs = sample_trajectories(p, {}, c, 4);
  std::map<Token, int> counts;
  for (const auto& t : trajs) {
    ASSERT_EQ(t.size(), 2u);
    ASSERT_EQ(t[0], B);
    ++counts[t[1]];
  }
  const auto exact = nucleus_distribution(p.next_token_logits({}, Trajectory{B}), 1.0, 1.0);
  for (Token t : {CL, P, E}) {
    const double q = exact[static_cast<std::size_t>(t)];
    const double sigma = std::sqrt(3000 * q * (1 - q));
    EXPECT_NEAR(counts[t], 3000 * q, 3 * sigma) << t;
  }
}

TEST(SampleTrajectories, DeterministicFramedAndBounded) {
  const auto d = testing::make_data({});
  const auto p = testing::train_sl(d, 8, 2.0, 20, 2);
  SamplerConfig c;
  c.num_trajectories = 6;
  c.max_len = 7;
  const auto& hist = d.train.back().history;
  const auto a = sample_trajectories(p, hist, c, 3);
  EXPECT_EQ(a, sample_trajectories(p, hist, c, 3));
  ASSERT_EQ(a.size(), 6u);
  for (const auto& t : a) {
    EXPECT_EQ(t.front(), B);
    EXPECT_LE(t.size(), 7u);
    if (t.size() < 7u) EXPECT_EQ(t.back(), E);
  }
  c.num_trajectories = 1;
  std::mt19937_64 rng(derive_seed(3, std::uint64_t{0}));
  EXPECT_EQ(sample_trajectories(p, hist, c, 3).front(), sample_trajectory(p, hist, c, rng));
}

TEST(ExplorationPrefix, EndsAtDecisionPoint) {
  EXPECT_EQ(exploration_prefix(Trajectory{B, CL, 6, P, 7, E}), (Trajectory{B, CL, 6, P}));
  EXPECT_EQ(exploration_prefix(Trajectory{B, CL, 6, 7}), (Trajectory{B, CL, 6, 7, P}));
  EXPECT_EQ(exploration_prefix(Trajectory{B, CL, 6, P}), (Trajectory{B, CL, 6, P}));
}

TEST(RetrieveTopk, SelfSimilarityAndExhaustive) {
  policy::SequencePolicy p(10, 4);
  for (Token i = 6; i < 10; ++i) p.embeddings()(i, i - 6) = 1.0;
  // Trajectory consisting only of item 8 gives state e_8.
  const auto top = retrieve_topk(p, {}, Trajectory{8}, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0], 8);
  auto all = retrieve_topk(p, {}, Trajectory{8}, 100);
  EXPECT_EQ(all.size(), 4u);
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<Token>{6, 7, 8, 9}));
}

TEST(RetrieveTopk, MatchesBruteForceSort) {
  const auto p = policy::init_policy(10, 3, 5);
  const Trajectory traj{B, CL, 7, 8};
  const Vector s = policy::final_hidden_state(p, {}, exploration_prefix(traj));
  std::vector<std::pair<double, Token>> scored;
  for (Token i = 6; i < 10; ++i) scored.push_back({-p.embeddings().row(i).dot(s), i});
  std::sort(scored.begin(), scored.end());
  const auto got = retrieve_topk(p, {}, traj, 4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(got[i], scored[i].second);
}

TEST(CandidateSet, DedupKeepsMaxScore) {
  const auto p = policy::init_policy(12, 4, 6);
  const std::vector<Trajectory> trajs = {{B, CL, 6, E}, {B, CL, 7, 8, E}};
  const auto set = candidates_from_trajectories(p, {}, trajs, 6);
  std::map<Token, double> best;
  for (const auto& t : trajs) {
    for (Token item : retrieve_topk(p, {}, t, 6)) {
      auto full = exploration_prefix(t);
      full.push_back(item);
      const double s = policy::trajectory_log_likelihood(p, {}, full);
      auto [it, fresh] = best.try_emplace(item, s);
      if (!fresh) it->second = std::max(it->second, s);
    }
  }
  for (const auto& c : set.candidates) EXPECT_DOUBLE_EQ(c.score, best.at(c.item));
}

TEST(CandidateSet, InvariantsAndDeterminism) {
  const auto d = testing::make_data({});
  const auto p = testing::train_sl(d, 8, 2.0, 30, 3);
  SamplerConfig c;
  const auto& hist = d.test.front().history;
  const auto a = build_candidate_set(p, hist, c, 12);
  EXPECT_LE(a.candidates.size(), static_cast<std::size_t>(c.top_k));
  std::set<Token> items;
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    const auto& cand = a.candidates[i];
    EXPECT_TRUE(items.insert(cand.item).second);
    EXPECT_LE(cand.score, 0.0);
    EXPECT_EQ(cand.trajectory.back(), cand.item);
    EXPECT_EQ(cand.trajectory[cand.trajectory.size() - 2], P);
    if (i) EXPECT_GE(a.candidates[i - 1].score, cand.score);
  }
  const auto b = build_candidate_set(p, hist, c, 12);
  ASSERT_EQ(a.candidates.size(), b.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    EXPECT_EQ(a.candidates[i].item, b.candidates[i].item);
    EXPECT_EQ(a.candidates[i].score, b.candidates[i].score);
  }
  c.num_trajectories = 1;
  EXPECT_EQ(build_candidate_set(p, hist, c, 1).candidates.size(),
            std::min<std::size_t>(c.top_k, d.vocab.item_count()));
}

TEST(CandidateSet, JsonRoundTrip) {
  const auto d = testing::make_data({});
  const auto p = testing::train_sl(d, 8, 2.0, 10, 3);
  const auto a = build_candidate_set(p, d.test.front().history, {}, 2);
  const auto doc = candidate_set_to_json(a, d.vocab);
  ASSERT_TRUE(doc.is_array());
  EXPECT_TRUE(doc[0].contains("item_id"));
  EXPECT_TRUE(doc[0]["trajectory"][0].is_string());
  const auto back = candidate_set_from_json(doc, d.vocab);
  ASSERT_EQ(back.candidates.size(), a.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    EXPECT_EQ(back.candidates[i].item, a.candidates[i].item);
    EXPECT_EQ(back.candidates[i].trajectory, a.candidates[i].trajectory);
    EXPECT_EQ(back.candidates[i].score, a.candidates[i].score);
  }
}

TEST(SamplerConfig, Validation) {
  SamplerConfig c;
  c.p = 0.0;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = {};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = {};
  c.top_k = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
}

}  // namespace
}  // namespace recpilot::decode
