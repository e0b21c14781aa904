#include <gtest/gtest.h>

#include <filesystem>

#include "recpilot/config.hpp"
#include "support/fixtures.hpp"

namespace recpilot::config {
namespace {

using nlohmann::json;

std::string example_config() { return std::string(RECPILOT_SOURCE_DIR) + "/configs/example.json"; }

TEST(Config, ExampleLoadsAndResolvesRelativePaths) {
  const auto c = load_config(example_config());
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.sampler.p, 0.9);
  EXPECT_EQ(c.grpo.group_size, 8);
  const auto expected = (std::filesystem::path(RECPILOT_SOURCE_DIR) / "data/synthetic/interactions.tsv")
                            .lexically_normal();
  EXPECT_EQ(std::filesystem::path(c.data.interactions), expected);
  EXPECT_EQ(c.providers.judge.kind, llm::ProviderKind::kMock);
}

TEST(Config, OverridesApplyInOrderAndParseJson) {
  const auto c = load_config(example_config(), {"sampler.p=0.95", "sampler.p=0.8", "eval.k=[1,3]",
                                                "data.interactions=/abs/x.tsv"});
  EXPECT_DOUBLE_EQ(c.sampler.p, 0.8);
  EXPECT_EQ(c.eval.k, (std::vector<int>{1, 3}));
  EXPECT_EQ(c.data.interactions, "/abs/x.tsv");
}

TEST(Config, ApplyOverrideBuildsNestedObjects) {
  json doc = json::object();
  apply_override(doc, "a.b.c=3");
  apply_override(doc, "a.name=hello");
  EXPECT_EQ(doc["a"]["b"]["c"], 3);
  EXPECT_EQ(doc["a"]["name"], "hello");
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a.b.c.d=1"), ConfigError);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sampler", {{"q", 1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sampler", {{"p", 7}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"seed", "seven"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"policy", {{"dim", 1}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  const auto c = load_config(example_config(), {"preference.delta=0.3", "grpo.steps=12"});
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_DOUBLE_EQ(back.preference.delta, 0.3);
  EXPECT_EQ(back.grpo.steps, 12);
}

TEST(Config, MalformedFileIsAConfigError) {
  testing::TempDir dir("cfg");
  const auto path = dir.str() + "/bad.json";
  write_file(path, "{ not json");
  EXPECT_THROW(load_config(path), ConfigError);
}

}  // namespace
}  // namespace recpilot::config
