#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recpilot/eval.hpp"

namespace recpilot::eval {
namespace {

using nlohmann::json;
using Ids = std::vector<std::string>;

TEST(Recall, ExamplesAndRepeats) {
  const Ids ranked{"a", "b", "c", "d"};
  EXPECT_DOUBLE_EQ(recall_at_k(std::span<const std::string>(ranked), {"b", "z"}, 2), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_k(std::span<const std::string>(ranked), {"d"}, 3), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(std::span<const std::string>(ranked), {"d"}, 100), 1.0);
  const std::vector<Token> rep{7, 7, 7};
  EXPECT_DOUBLE_EQ(recall_at_k(std::span<const Token>(rep), std::set<Token>{7, 8}, 3), 0.5);
  EXPECT_THROW(recall_at_k(std::span<const Token>(rep), std::set<Token>{}, 3), PreconditionError);
  EXPECT_THROW(recall_at_k(std::span<const Token>(rep), std::set<Token>{7}, 0), PreconditionError);
}

TEST(Ndcg, Examples) {
  const Ids ranked{"a", "b", "c", "d", "x"};
  const auto r = std::span<const std::string>(ranked);
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, {"a"}, 10), 1.0);
  EXPECT_NEAR(ndcg_at_k(r, {"x"}, 10), 1.0 / std::log2(6.0), 1e-12);
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, {"x"}, 4), 0.0);
  // Hits at ranks 2 and 3 over two relevant.
  EXPECT_NEAR(ndcg_at_k(r, {"b", "c"}, 10),
              (1.0 / std::log2(3.0) + 0.5) / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  // A repeated hit counts once.
  const Ids dup{"a", "a"};
  EXPECT_DOUBLE_EQ(ndcg_at_k(std::span<const std::string>(dup), {"a", "b"}, 2),
                   1.0 / (1.0 + 1.0 / std::log2(3.0)));
}

TEST(Metrics, MonotoneInKAndBounded) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Token> ranked(20);
    for (auto& t : ranked) t = static_cast<Token>(rng() % 30);
    std::set<Token> rel;
    while (rel.size() < 1 + rng() % 4) rel.insert(static_cast<Token>(rng() % 30));
    double prev = 0.0;
    for (int k = 1; k <= 25; ++k) {
      const double r = recall_at_k(std::span<const Token>(ranked), rel, k);
      ASSERT_GE(r, prev);
      prev = r;
      const double n = ndcg_at_k(std::span<const Token>(ranked), rel, k);
      ASSERT_GE(n, 0.0);
      ASSERT_LE(n, 1.0 + 1e-12);
    }
  }
}

TEST(ReportScores, AverageAndClamp) {
  const ReportScores s{5, 4, 4, 5, 4, 4};
  EXPECT_NEAR(s.average(), 26.0 / 6.0, 1e-12);
  EXPECT_NEAR(s.to_json()["average"].get<double>(), 4.333, 1e-3);
  const auto p = parse_report_scores(
      R"({"scores":{"accuracy":6,"coverage":0,"informativeness":3.4,"clarity":4,"consistency":5,"novelty":1}})");
  EXPECT_DOUBLE_EQ(p.accuracy, 5);
  EXPECT_DOUBLE_EQ(p.coverage, 1);
  EXPECT_DOUBLE_EQ(p.informativeness, 3);
  EXPECT_THROW(parse_report_scores(R"({"accuracy":3})"), llm::MalformedResponseError);
}

TEST(JudgeReport, RetriesOnceThenRaises) {
  llm::MockProvider mock;
  const json good = {{"accuracy", 5}, {"coverage", 4}, {"informativeness", 4},
                     {"clarity", 5},  {"consistency", 4}, {"novelty", 4}};
  mock.enqueue("judge_report", "no idea");
  mock.enqueue("judge_report", good.dump());
  EXPECT_NEAR(judge_report(json::object(), {}, mock).average(), 26.0 / 6.0, 1e-12);
  EXPECT_EQ(mock.call_count("judge_report"), 2u);
  mock.enqueue("judge_report", "no");
  mock.enqueue("judge_report", "still no");
  EXPECT_THROW(judge_report(json::object(), {}, mock), llm::MalformedResponseError);
}

TEST(JudgePrompt, CarriesRubricReportAndContext) {
  JudgeContext ctx;
  ctx.ground_truth = {"x"};
  ctx.candidates = {"x", "y"};
  const auto prompt = judge_prompt(json{{"intent", "i"}}, ctx, "RUBRIC-TEXT");
  EXPECT_EQ(llm::task_tag(prompt), "judge_report");
  EXPECT_NE(prompt.find("RUBRIC-TEXT"), std::string::npos);
  const auto data = llm::data_block(prompt);
  ASSERT_TRUE(data);
  EXPECT_EQ((*data)["report"]["intent"], "i");
  EXPECT_EQ((*data)["context"]["ground_truth"], json::array({"x"}));
  for (const char* dim : kReportDimensions) {
    EXPECT_NE(default_judge_rubric().find(dim), std::string::npos) << dim;
  }
}

TEST(Pairwise, PositionBiasedJudgeBalancesOut) {
  // The mock always prefers whichever report is shown first.
  llm::MockProvider mock;
  const auto t = run_pairwise(json{{"r", "a"}}, json{{"r", "b"}}, {}, mock, 100, 17);
  EXPECT_EQ(t.a_wins + t.b_wins, 100);
  EXPECT_EQ(t.swapped.size(), 100u);
  EXPECT_GE(t.a_wins, 40);
  EXPECT_LE(t.a_wins, 60);
  int swaps = 0;
  for (bool s : t.swapped) swaps += s;
  EXPECT_EQ(t.b_wins, swaps);
}

TEST(Pairwise, VerdictMapsBackThroughSwap) {
  llm::MockProvider mock;
  const json a = {{"name", "A"}}, b = {{"name", "B"}};
  mock.set_handler("pairwise", [](const json& data, const std::string&) {
    return json{{"winner", data["report_1"]["name"] == "B" ? 1 : 2}}.dump();
  });
  const auto t = run_pairwise(a, b, {}, mock, 50, 3);
  EXPECT_EQ(t.b_wins, 50);
  EXPECT_EQ(t.a_wins, 0);
}

TEST(Pairwise, AbstentionsAreDiscarded) {
  llm::MockProvider mock;
  mock.enqueue("pairwise", R"({"winner":"abstain"})");
  mock.enqueue("pairwise", "garbage");
  const auto t = run_pairwise(json::object(), json::object(), {}, mock, 5, 1);
  EXPECT_EQ(t.abstentions, 2);
  EXPECT_EQ(t.a_wins + t.b_wins, 3);
}

TEST(Pairwise, SameSeedSameOrders) {
  llm::MockProvider m1, m2;
  EXPECT_EQ(run_pairwise({}, {}, {}, m1, 30, 8).swapped, run_pairwise({}, {}, {}, m2, 30, 8).swapped);
}

}  // namespace
}  // namespace recpilot::eval
