#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recpilot/preference.hpp"
#include "support/fixtures.hpp"

namespace recpilot::preference {
namespace {

using nlohmann::json;

catalog::AttributeCatalog attrs() { return catalog::AttributeCatalog({"price", "brand", "color", "size"}); }

AspectRanking ranking(std::vector<std::string> attributes, std::vector<std::string> ids) {
  AspectRanking r;
  r.aspect.name = attributes.empty() ? "none" : attributes.front();
  r.aspect.attributes = std::move(attributes);
  Token t = ingest::Vocabulary::kFirstItem;
  double score = 100.0;
  for (auto& id : ids) {
    RankedEntry e;
    e.item_id = std::move(id);
    e.token = t++;
    e.score = score--;
    r.entries.push_back(std::move(e));
  }
  return r;
}

ExperienceEntry entry(std::vector<double> embedding, int step, std::string content) {
  ExperienceEntry e;
  e.condition = "c";
  e.content = std::move(content);
  e.embedding = std::move(embedding);
  e.created_step = step;
  return e;
}

TEST(Rubrics, InitAtMinimumWeightInCatalogOrder) {
  const auto s = init_preference("u1", attrs());
  EXPECT_EQ(s.user_id, "u1");
  EXPECT_EQ(s.step, 0);
  EXPECT_TRUE(s.memory.empty());
  EXPECT_EQ(s.rubrics.names(), (std::vector<std::string>{"price", "brand", "color", "size"}));
  for (const auto& [name, w] : s.rubrics.entries()) EXPECT_DOUBLE_EQ(w, 1.0);
  EXPECT_THROW(init_preference("u", catalog::AttributeCatalog{}), PreconditionError);
}

TEST(Rubrics, SetClampsAndUnknownThrows) {
  RubricWeights w(attrs());
  w.set("price", 7.0);
  EXPECT_DOUBLE_EQ(w.at("price"), 3.0);
  w.set("price", -2.0);
  EXPECT_DOUBLE_EQ(w.at("price"), 1.0);
  EXPECT_THROW(w.at("weight"), PreconditionError);
  EXPECT_THROW(w.set("weight", 2.0), PreconditionError);
}

TEST(Rubrics, ByWeightKeepsCatalogOrderOnTies) {
  RubricWeights w(attrs());
  w.set("color", 2.0);
  EXPECT_EQ(w.by_weight(), (std::vector<std::string>{"color", "price", "brand", "size"}));
}

TEST(PreferenceState, JsonRoundTrip) {
  auto s = init_preference("user/äö", attrs());
  s.step = 4;
  s.rubrics.set("brand", 1.6);
  s.memory.push_back(entry({0.6, 0.8}, 2, "likes blue"));
  s.memory.back().source = ExperienceSource::kLowLevelMining;
  EXPECT_EQ(state_from_json(state_to_json(s)), s);
  auto bad = state_to_json(s);
  bad["v"] = 2;
  EXPECT_THROW(state_from_json(bad), ParseError);
  EXPECT_THROW(state_from_json(json{{"v", 1}}), ParseError);
}

TEST(PreferenceStore, SaveLoadAndOverwrite) {
  testing::TempDir dir("prefs");
  PreferenceStore store(dir.str());
  auto s = store.init("a/b", attrs());
  EXPECT_TRUE(store.exists("a/b"));
  s.rubrics.set("size", 2.5);
  s.step = 3;
  store.save(s);
  EXPECT_EQ(store.load("a/b"), s);
  EXPECT_EQ(store.init("a/b", attrs()), s);
  const auto fresh = store.init("a/b", attrs(), /*overwrite=*/true);
  EXPECT_DOUBLE_EQ(fresh.rubrics.at("size"), 1.0);
  EXPECT_EQ(store.load("a/b"), fresh);
  EXPECT_THROW(store.load("missing"), IoError);
}

TEST(Retrieval, MatchesBruteForceAndPrefersRecentOnTies) {
  auto s = init_preference("u", attrs());
  s.memory.push_back(entry({1, 0}, 0, "old"));
  s.memory.push_back(entry({0, 1}, 1, "orthogonal"));
  s.memory.push_back(entry({1, 0}, 5, "new"));
  const std::vector<double> q{1, 0};
  const auto top = retrieve_experience(s, q, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].content, "new");
  EXPECT_EQ(top[1].content, "old");
  EXPECT_EQ(retrieve_experience(s, q, 10).size(), 3u);
  EXPECT_THROW(retrieve_experience(s, q, 0), PreconditionError);
}

TEST(Retrieval, RandomMemoryAgreesWithExhaustiveCosine) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  auto s = init_preference("u", attrs());
  for (int i = 0; i < 40; ++i) s.memory.push_back(entry({n(rng), n(rng), n(rng)}, i, std::to_string(i)));
  const std::vector<double> q{n(rng), n(rng), n(rng)};
  const auto top = retrieve_experience(s, q, 5);
  std::vector<double> sims;
  for (const auto& e : s.memory) {
    double d = 0, a = 0, b = 0;
    for (int j = 0; j < 3; ++j) {
      d += q[j] * e.embedding[j];
      a += q[j] * q[j];
      b += e.embedding[j] * e.embedding[j];
    }
    sims.push_back(d / std::sqrt(a * b));
  }
  std::sort(sims.rbegin(), sims.rend());
  ASSERT_EQ(top.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(cosine(q, top[i].embedding), sims[i], 1e-12);
}

TEST(OptimizeRubrics, TopHitWinsOverFifthPlace) {
  auto s = init_preference("u", attrs());
  const std::vector<AspectRanking> r{ranking({"price", "brand"}, {"x", "a", "b", "c", "d"}),
                                     ranking({"color"}, {"a", "b", "c", "d", "x"})};
  const auto u = optimize_rubrics(s, r, {"x"}, 0.2, 10);
  ASSERT_EQ(u.ndcg.size(), 2u);
  EXPECT_DOUBLE_EQ(u.ndcg[0], 1.0);
  EXPECT_NEAR(u.ndcg[1], 1.0 / std::log2(6.0), 1e-12);
  ASSERT_TRUE(u.winner);
  EXPECT_EQ(*u.winner, 0u);
  EXPECT_DOUBLE_EQ(s.rubrics.at("price"), 1.2);
  EXPECT_DOUBLE_EQ(s.rubrics.at("brand"), 1.2);
  EXPECT_DOUBLE_EQ(s.rubrics.at("color"), 1.0);
}

TEST(OptimizeRubrics, ZeroDeltaIsANoOp) {
  auto s = init_preference("u", attrs());
  const auto before = s.rubrics;
  const std::vector<AspectRanking> r{ranking({"price"}, {"x"})};
  optimize_rubrics(s, r, {"x"}, 0.0, 10);
  EXPECT_EQ(s.rubrics, before);
}

TEST(OptimizeRubrics, BoostStopsAtUpperBound) {
  auto s = init_preference("u", attrs());
  s.rubrics.set("price", 2.9);
  const std::vector<AspectRanking> r{ranking({"price"}, {"x"})};
  optimize_rubrics(s, r, {"x"}, 0.2, 10);
  EXPECT_DOUBLE_EQ(s.rubrics.at("price"), 3.0);
}

TEST(OptimizeRubrics, NoHitsMeansNoUpdate) {
  auto s = init_preference("u", attrs());
  const auto before = s.rubrics;
  const std::vector<AspectRanking> r{ranking({"price"}, {"a", "b"}), ranking({"color"}, {"b", "a"})};
  const auto u = optimize_rubrics(s, r, {"x"}, 0.2, 10);
  EXPECT_FALSE(u.winner);
  EXPECT_EQ(s.rubrics, before);
}

TEST(OptimizeRubrics, TiesGoToLowestIndex) {
  auto s = init_preference("u", attrs());
  const std::vector<AspectRanking> r{ranking({"size"}, {"a", "x"}), ranking({"color"}, {"b", "x"})};
  const auto u = optimize_rubrics(s, r, {"x"}, 0.2, 10);
  EXPECT_EQ(u.winner, std::optional<std::size_t>(0));
  EXPECT_DOUBLE_EQ(s.rubrics.at("size"), 1.2);
  EXPECT_DOUBLE_EQ(s.rubrics.at("color"), 1.0);
  EXPECT_THROW(optimize_rubrics(s, {}, {"x"}, 0.2, 10), PreconditionError);
}

TEST(OptimizeRubrics, WeightsStayInBoundsUnderRandomUpdates) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> names{"price", "brand", "color", "size"};
  const std::vector<std::string> items{"a", "b", "c", "d", "e", "f"};
  auto s = init_preference("u", attrs());
  for (int step = 0; step < 300; ++step) {
    std::vector<AspectRanking> r;
    for (int j = 0; j < 3; ++j) {
      auto ids = items;
      std::shuffle(ids.begin(), ids.end(), rng);
      r.push_back(ranking({names[rng() % 4], names[rng() % 4]}, ids));
    }
    std::uniform_real_distribution<double> d(0.0, 0.8);
    optimize_rubrics(s, r, {items[rng() % items.size()]}, d(rng), 10);
    for (const auto& [name, w] : s.rubrics.entries()) {
      ASSERT_GE(w, kMinWeight);
      ASSERT_LE(w, kMaxWeight);
    }
  }
}

TEST(Consolidation, TriggerRequiresStrictImprovement) {
  const std::vector<std::string> best{"x", "a", "b"};
  const std::vector<std::string> base{"a", "x", "b"};
  EXPECT_TRUE(consolidation_triggered(best, base, {"x"}));
  EXPECT_FALSE(consolidation_triggered(base, best, {"x"}));
  EXPECT_FALSE(consolidation_triggered(best, best, {"x"}));
  const std::vector<std::string> without{"a", "b"};
  EXPECT_TRUE(consolidation_triggered(best, without, {"x"}));
  EXPECT_FALSE(consolidation_triggered(without, best, {"x"}));
  EXPECT_FALSE(consolidation_triggered(without, without, {"x"}));
}

TEST(Consolidation, AppendsEmbeddedEntriesWhenTriggered) {
  llm::MockProvider mock(1, 16);
  mock.enqueue("consolidate_experience",
               R"({"entries":[{"condition":"budget shopping","content":"cheap first"}]})");
  auto s = init_preference("u", attrs());
  s.step = 7;
  catalog::ItemCatalog items;
  const auto best = ranking({"price"}, {"x", "a"});
  const std::vector<std::string> base{"a", "x"};
  EXPECT_EQ(consolidate_experience(s, best, base, {"x"}, items, mock), 1u);
  ASSERT_EQ(s.memory.size(), 1u);
  EXPECT_EQ(s.memory[0].content, "cheap first");
  EXPECT_EQ(s.memory[0].created_step, 7);
  EXPECT_EQ(s.memory[0].source, ExperienceSource::kConsolidation);
  EXPECT_EQ(s.memory[0].embedding, mock.embed("budget shopping"));
  EXPECT_EQ(mock.call_count("consolidate_experience"), 1u);

  // Not triggered: no model call at all.
  EXPECT_EQ(consolidate_experience(s, ranking({"price"}, {"a", "x"}), base, {"x"}, items, mock), 0u);
  EXPECT_EQ(mock.call_count("consolidate_experience"), 1u);
}

TEST(Consolidation, ProviderFailureLeavesStateUntouched) {
  llm::MockProvider mock;
  mock.enqueue("consolidate_experience", "not json");
  auto s = init_preference("u", attrs());
  const auto before = s;
  const std::vector<std::string> base{"a", "x"};
  EXPECT_THROW(consolidate_experience(s, ranking({"price"}, {"x", "a"}), base, {"x"}, {}, mock),
               llm::MalformedResponseError);
  EXPECT_EQ(s, before);
}

TEST(LowLevelMining, OneCallNoRubricChange) {
  llm::MockProvider mock;
  auto s = init_preference("u", attrs());
  s.rubrics.set("color", 2.0);
  const auto rubrics = s.rubrics;
  ingest::Session browse{"u", 10, {{Action::kClick, "a"}, {Action::kCart, "b"}}};
  const auto added = mine_low_level_session(s, browse, {}, mock);
  EXPECT_EQ(mock.call_count("mine_low_level"), 1u);
  EXPECT_EQ(s.memory.size(), added);
  EXPECT_GE(added, 1u);
  for (const auto& e : s.memory) EXPECT_EQ(e.source, ExperienceSource::kLowLevelMining);
  EXPECT_EQ(s.rubrics, rubrics);

  ingest::Session bought{"u", 11, {{Action::kClick, "a"}, {Action::kPurchase, "a"}}};
  EXPECT_THROW(mine_low_level_session(s, bought, {}, mock), PreconditionError);
}

TEST(ExperienceParsing, RejectsMalformedEntries) {
  llm::MockProvider mock;
  const auto src = ExperienceSource::kConsolidation;
  EXPECT_THROW(parse_experience_entries(R"({"x":1})", mock, src, 0), llm::MalformedResponseError);
  EXPECT_THROW(parse_experience_entries(R"({"entries":[{"condition":"c"}]})", mock, src, 0),
               llm::MalformedResponseError);
  EXPECT_THROW(parse_experience_entries(R"({"entries":[{"condition":"","content":"x"}]})", mock, src, 0),
               llm::MalformedResponseError);
  EXPECT_TRUE(parse_experience_entries(R"({"entries":[]})", mock, src, 0).empty());
}

}  // namespace
}  // namespace recpilot::preference
