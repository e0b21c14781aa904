#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "support/fixtures.hpp"

namespace {

int exit_code(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kCli = RECPILOT_CLI;

TEST(Cli, MissingConfigExitsTwo) {
  EXPECT_EQ(exit_code(kCli + " eval --config /nonexistent/run.json"), 2);
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
  recpilot::testing::TempDir dir("cli");
  recpilot::write_file((dir.path() / "c.json").string(), R"({"seed": 1, "bogus": 3})");
  EXPECT_EQ(exit_code(kCli + " ingest --config " + (dir.path() / "c.json").string()), 2);
}

TEST(Cli, BadOverrideExitsTwo) {
  const std::string config = std::string(RECPILOT_SOURCE_DIR) + "/configs/example.json";
  EXPECT_EQ(exit_code(kCli + " ingest --config " + config + " --set sampler.p=7"), 2);
}

TEST(Cli, UsageErrorExitsTwo) {
  EXPECT_EQ(exit_code(kCli + " frobnicate"), 2);
}

TEST(Cli, RuntimeErrorExitsOne) {
  // Valid config, but the stage has no dataset to read.
  recpilot::testing::TempDir dir("cli");
  recpilot::write_file((dir.path() / "c.json").string(), R"({"seed": 1})");
  EXPECT_EQ(exit_code(kCli + " train-sl --config " + (dir.path() / "c.json").string() + " --run-dir " +
                      (dir.path() / "run").string()),
            1);
}

}  // namespace
