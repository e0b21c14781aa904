#include <gtest/gtest.h>

#include <random>

#include "recpilot/tokenizer.hpp"

namespace recpilot::tokenizer {
namespace {

constexpr Token B = Vocabulary::kBos, E = Vocabulary::kEos, CL = Vocabulary::kClick,
                CO = Vocabulary::kCollect, CA = Vocabulary::kCart, P = Vocabulary::kPurchase;

class TokenizerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    a = vocab.add_item("a");
    b = vocab.add_item("b");
    c = vocab.add_item("c");
    x = vocab.add_item("x");
  }
  Session make(std::vector<Step> steps) { return {"u", 0, std::move(steps)}; }
  Vocabulary vocab;
  Token a = 0, b = 0, c = 0, x = 0;
};

TEST_F(TokenizerTest, CollapsesRunsOfOneAction) {
  const auto t = tokenize_session(
      make({{Action::kClick, "a"}, {Action::kClick, "b"}, {Action::kCollect, "c"}, {Action::kPurchase, "c"}}),
      vocab);
  EXPECT_EQ(t, (Trajectory{B, CL, a, b, CO, c, P, c, E}));
}

TEST_F(TokenizerTest, SinglePurchase) {
  EXPECT_EQ(tokenize_session(make({{Action::kPurchase, "x"}}), vocab), (Trajectory{B, P, x, E}));
}

TEST_F(TokenizerTest, AlternatingActionsDoNotCollapse) {
  const auto t = tokenize_session(
      make({{Action::kClick, "a"}, {Action::kCollect, "b"}, {Action::kClick, "c"}}), vocab);
  EXPECT_EQ(t, (Trajectory{B, CL, a, CO, b, CL, c, E}));
}

TEST_F(TokenizerTest, UnknownItemThrows) {
  EXPECT_THROW(tokenize_session(make({{Action::kClick, "zz"}}), vocab), PreconditionError);
}

TEST_F(TokenizerTest, DetokenizeInvertsFirstExample) {
  const std::vector<Step> steps = {
      {Action::kClick, "a"}, {Action::kClick, "b"}, {Action::kCollect, "c"}, {Action::kPurchase, "c"}};
  EXPECT_EQ(detokenize_trajectory(tokenize_session(make(steps), vocab), vocab), steps);
}

TEST_F(TokenizerTest, DetokenizeRejectsInvalidStreams) {
  try {
    detokenize_trajectory(Trajectory{B, CL, a, E}, vocab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.violation(), FormatViolation::kMissingTerminalPurchase);
  }
  try {
    detokenize_trajectory(Trajectory{B, E}, vocab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.violation(), FormatViolation::kMalformedFrame);
  }
}

TEST_F(TokenizerTest, ValidateFormatRules) {
  EXPECT_EQ(validate_format(Trajectory{B, P, x, E}).violation, FormatViolation::kStartsWithPurchase);
  EXPECT_EQ(validate_format(Trajectory{B, CL, CL, a, P, a, E}).violation,
            FormatViolation::kRepeatedActionNoItem);
  // Any adjacent pair of actions is rejected, not only identical ones.
  EXPECT_EQ(validate_format(Trajectory{B, CL, CO, a, P, a, E}).violation,
            FormatViolation::kRepeatedActionNoItem);
  EXPECT_TRUE(validate_format(Trajectory{B, CL, a, P, a, E}).ok());
  EXPECT_EQ(validate_format(Trajectory{B, CL, a, P, a}).violation, FormatViolation::kMalformedFrame);
  EXPECT_EQ(validate_format(Trajectory{CL, a, P, a, E}).violation, FormatViolation::kMalformedFrame);
  EXPECT_EQ(validate_format(Trajectory{B, CL, a, CA, b, E}).violation,
            FormatViolation::kMissingTerminalPurchase);
  // A purchase followed by no item cannot terminate a session.
  EXPECT_FALSE(validate_format(Trajectory{B, CL, a, P, E}).ok());
  // Earlier purchase segments are allowed.
  EXPECT_TRUE(validate_format(Trajectory{B, CL, a, P, a, CL, b, P, b, E}).ok());
}

TEST_F(TokenizerTest, PredictedFinalItem) {
  EXPECT_EQ(predicted_final_item(Trajectory{B, CL, a, P, b, E}), b);
  EXPECT_FALSE(predicted_final_item(Trajectory{B, CL, a, b}).has_value());
  EXPECT_EQ(item_tokens(Trajectory{B, CL, a, b, P, b, E}), (std::vector<Token>{a, b, b}));
}

TEST_F(TokenizerTest, HistoryKeepsLastSessions) {
  const std::vector<Session> h = {make({{Action::kClick, "a"}}), make({{Action::kPurchase, "b"}})};
  EXPECT_EQ(tokenize_history(h, vocab), (Trajectory{B, CL, a, E, B, P, b, E}));
  EXPECT_EQ(tokenize_history(h, vocab, 1), (Trajectory{B, P, b, E}));
}

// Random legal sessions: round trip, compression bound, validity.
TEST_F(TokenizerTest, PropertiesOverRandomSessions) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> ids = {"a", "b", "c", "x"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Step> steps;
    const int n = std::uniform_int_distribution<int>(0, 7)(rng);
    for (int i = 0; i < n; ++i) {
      steps.push_back({static_cast<Action>(std::uniform_int_distribution<int>(0, 2)(rng)),
                       ids[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]});
    }
    const bool purchase_ends = std::bernoulli_distribution(0.8)(rng);
    if (purchase_ends) steps.push_back({Action::kPurchase, ids[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]});
    if (steps.empty()) continue;
    const auto t = tokenize_session(make(steps), vocab);
    bool adjacent_same = false;
    for (std::size_t i = 1; i < steps.size(); ++i) adjacent_same |= steps[i].action == steps[i - 1].action;
    EXPECT_LE(t.size(), 2 * steps.size() + 2);
    EXPECT_EQ(t.size() == 2 * steps.size() + 2, !adjacent_same);
    if (purchase_ends && n > 0) {
      ASSERT_TRUE(validate_format(t).ok()) << to_string(t, vocab);
      EXPECT_EQ(detokenize_trajectory(t, vocab), steps);
      EXPECT_EQ(tokenize_session(make(detokenize_trajectory(t, vocab)), vocab), t);
    }
  }
}

TEST_F(TokenizerTest, SymbolsAndJson) {
  const Trajectory t{B, CL, a, P, a, E};
  EXPECT_EQ(to_string(t, vocab), "<bos> <click> a <purchase> a <eos>");
  EXPECT_EQ(to_json(t).dump(), "[0,2,6,5,6,1]");
}

}  // namespace
}  // namespace recpilot::tokenizer
