#pragma once

// Report judging on six quality dimensions and position-balanced pairwise
// comparison. Ranking metrics live in metrics.hpp.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/ingest.hpp"
#include "recpilot/llm_provider.hpp"
#include "recpilot/metrics.hpp"

namespace recpilot::eval {

inline constexpr std::array<const char*, 6> kReportDimensions = {
    "accuracy", "coverage", "informativeness", "clarity", "consistency", "novelty"};

struct ReportScores {
  double accuracy = 0.0;
  double coverage = 0.0;
  double informativeness = 0.0;
  double clarity = 0.0;
  double consistency = 0.0;
  double novelty = 0.0;

  double average() const;
  nlohmann::json to_json() const;
  bool operator==(const ReportScores&) const = default;
};

/// What the judge may consult besides the report.
struct JudgeContext {
  std::vector<ingest::Step> history;     // observed behavior before the target
  std::vector<ingest::Step> trajectory;  // simulated exploration
  std::vector<std::string> candidates;
  std::vector<std::string> ground_truth;  // purchased item ids

  nlohmann::json to_json() const;
};

/// Six dimensions with anchors for scores 1, 3 and 5.
const std::string& default_judge_rubric();

/// The judging prompt: rubric, grading rules, then a data block with the
/// report under "report" and the evidence under "context".
std::string judge_prompt(const nlohmann::json& report, const JudgeContext& context,
                         const std::string& rubric);

/// Parses six scores (clamped to [1, 5]); throws MalformedResponseError.
ReportScores parse_report_scores(const std::string& response);

/// One provider call; an unparsable answer is retried once, then raises.
ReportScores judge_report(const nlohmann::json& report, const JudgeContext& context,
                          llm::Provider& provider, const std::string& rubric = default_judge_rubric());

enum class Winner { kA, kB };

struct PairwiseResult {
  std::optional<Winner> winner;  // absent when the judge abstained
  bool swapped = false;          // b was presented first
};

/// Presentation order is drawn from `rng`; the verdict is mapped back to a/b.
PairwiseResult pairwise_compare(const nlohmann::json& report_a, const nlohmann::json& report_b,
                                const JudgeContext& context, llm::Provider& provider,
                                std::mt19937_64& rng);

struct PairwiseTally {
  int a_wins = 0;
  int b_wins = 0;
  int abstentions = 0;
  std::vector<bool> swapped;  // one per trial
};

/// `trials` comparisons with a generator seeded from `seed`; abstentions are
/// discarded from the win counts and logged.
PairwiseTally run_pairwise(const nlohmann::json& report_a, const nlohmann::json& report_b,
                           const JudgeContext& context, llm::Provider& provider, int trials,
                           std::uint64_t seed);

}  // namespace recpilot::eval
