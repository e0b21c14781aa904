#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "recpilot/common.hpp"
#include "support/fixtures.hpp"

namespace recpilot {
namespace {

TEST(Common, ActionNamesRoundTrip) {
  for (int a = 0; a < kNumActions; ++a) {
    const auto action = static_cast<Action>(a);
    EXPECT_EQ(parse_action(action_name(action)), action);
  }
  EXPECT_FALSE(parse_action("view").has_value());
}

TEST(Common, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Common, DerivedSeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(5, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
  EXPECT_NE(derive_seed(5, 3), derive_seed(6, 3));
  EXPECT_NE(derive_seed(5, "a"), derive_seed(5, "b"));
}

TEST(Common, FileStemEscapesUnsafeCharacters) {
  EXPECT_EQ(file_stem("user_01-a.b"), "user_01-a.b");
  EXPECT_EQ(file_stem("a/b"), "a%2Fb");
  EXPECT_EQ(file_stem(".hidden"), "%2Ehidden");
  EXPECT_NE(file_stem("a b"), file_stem("a_b"));
}

TEST(Common, SplitAndTrim) {
  EXPECT_EQ(split("a\tb\t\tc", '\t'), (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_EQ(trim("  x y \n"), "x y");
  EXPECT_EQ(trim("   "), "");
}

TEST(Common, FileRoundTripAndMissingFile) {
  testing::TempDir dir("common");
  const auto path = dir.str() + "/f.txt";
  write_file(path, "hello\n");
  EXPECT_EQ(read_file(path), "hello\n");
  EXPECT_THROW(read_file(dir.str() + "/missing"), IoError);
}

TEST(ParallelFor, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(500);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsWorkerException) {
  for (std::size_t jobs : {1u, 3u}) {
    EXPECT_THROW(parallel_for(100, jobs,
                              [](std::size_t i) {
                                if (i == 37) throw PreconditionError("boom");
                              }),
                 PreconditionError);
  }
}

}  // namespace
}  // namespace recpilot
