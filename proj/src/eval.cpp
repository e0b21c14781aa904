#include "recpilot/eval.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace recpilot::eval {

double ReportScores::average() const {
  return (accuracy + coverage + informativeness + clarity + consistency + novelty) / 6.0;
}

nlohmann::json ReportScores::to_json() const {
  return {{"accuracy", accuracy},       {"coverage", coverage},       {"informativeness", informativeness},
          {"clarity", clarity},         {"consistency", consistency}, {"novelty", novelty},
          {"average", average()}};
}

namespace {

nlohmann::json steps_json(const std::vector<ingest::Step>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    arr.push_back({{"action", std::string(action_name(s.action))}, {"item_id", s.item_id}});
  }
  return arr;
}

constexpr std::string_view kJudgeSystem =
    "You grade shopping decision reports against the evidence you are given. Answer with JSON "
    "only.";

}  // namespace

nlohmann::json JudgeContext::to_json() const {
  return {{"history", steps_json(history)},
          {"simulated_trajectory", steps_json(trajectory)},
          {"candidates", candidates},
          {"ground_truth", ground_truth}};
}

const std::string& default_judge_rubric() {
  static const std::string rubric =
      "Score each dimension from 1 to 5. Anchors are given for 1, 3 and 5; use 2 and 4 for "
      "reports in between.\n"
      "accuracy: 1 = neither the top pick nor any listed alternative is the purchased item or a "
      "close match; 3 = the top pick is wrong but the purchased item (or a close match) is among "
      "the alternatives; 5 = the top pick is the purchased item or an equivalent.\n"
      "coverage: 1 = the deciding factors are absent or invented; 3 = some relevant signals "
      "appear but they are loosely tied to the comparison; 5 = two or three decisive signals are "
      "named and each is tied to specific candidates.\n"
      "informativeness: 1 = mostly boilerplate or invented detail; 3 = useful content diluted by "
      "generic text; 5 = dense, and every statement can be checked against the evidence.\n"
      "clarity: 1 = no clear conclusion or contradictory advice; 3 = a conclusion exists but when "
      "to prefer an alternative is fuzzy; 5 = an explicit first choice and sharp conditions for "
      "each alternative.\n"
      "consistency: 1 = reasoning breaks down or conflicts with the shopper's recorded behavior; "
      "3 = broadly in line with the evidence with a few leaps; 5 = every inference follows from "
      "the recorded and simulated behavior.\n"
      "novelty: 1 = no forward-looking observation, or observations resting on invented facts; "
      "3 = some observations, but generic or minor; 5 = points out important, evidence-backed "
      "risks or opportunities the shopper may not have considered.\n";
  return rubric;
}

std::string judge_prompt(const nlohmann::json& report, const JudgeContext& context,
                         const std::string& rubric) {
  const std::string rules =
      "Grading rules:\n"
      "- Only the history, the simulated trajectory and the candidate list count as evidence. "
      "Details in the report that cannot be traced to them are fabricated and lower the score.\n"
      "- The purchased item in the context is the reference answer. Recommending items outside "
      "the candidate list, or revealing the held-out purchase, is a serious fault.\n"
      "- The trajectory is simulated; hedged or projected wording is fine, presenting it as "
      "observed history is not.\n"
      "- Judge usefulness for the decision, not style or fluency.\n"
      "Respond as {\"accuracy\":n,\"coverage\":n,\"informativeness\":n,\"clarity\":n,"
      "\"consistency\":n,\"novelty\":n}.";
  return llm::make_prompt("judge_report", rubric + rules,
                          {{"report", report}, {"context", context.to_json()}});
}

ReportScores parse_report_scores(const std::string& response) {
  const auto doc = llm::extract_json(response);
  if (!doc.is_object()) throw llm::MalformedResponseError("judge: response is not an object");
  const nlohmann::json& scores = doc.contains("scores") ? doc["scores"] : doc;
  std::array<double, 6> v{};
  for (std::size_t i = 0; i < kReportDimensions.size(); ++i) {
    const char* name = kReportDimensions[i];
    if (!scores.contains(name) || !scores[name].is_number()) {
      throw llm::MalformedResponseError(std::string("judge: missing numeric score '") + name + "'");
    }
    const double x = scores[name].get<double>();
    if (!std::isfinite(x)) throw llm::MalformedResponseError("judge: non-finite score");
    v[i] = std::clamp(std::round(x), 1.0, 5.0);
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

ReportScores judge_report(const nlohmann::json& report, const JudgeContext& context,
                          llm::Provider& provider, const std::string& rubric) {
  const auto prompt = judge_prompt(report, context, rubric);
  std::string problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = provider.chat(std::string(kJudgeSystem), prompt);
    try {
      return parse_report_scores(reply.text);
    } catch (const llm::MalformedResponseError& e) {
      problem = e.what();
      spdlog::warn("judge_report: {} (attempt {})", problem, attempt + 1);
    }
  }
  throw llm::MalformedResponseError("judge_report: unparsable verdict after retry: " + problem);
}

PairwiseResult pairwise_compare(const nlohmann::json& report_a, const nlohmann::json& report_b,
                                const JudgeContext& context, llm::Provider& provider,
                                std::mt19937_64& rng) {
  PairwiseResult result;
  result.swapped = std::bernoulli_distribution(0.5)(rng);
  const auto& first = result.swapped ? report_b : report_a;
  const auto& second = result.swapped ? report_a : report_b;
  const auto prompt = llm::make_prompt(
      "pairwise",
      "Two reports answer the same shopping decision. Pick the one that better helps the "
      "shopper decide, using the same grading rules as single-report scoring. Respond as "
      "{\"winner\":1} or {\"winner\":2}, or {\"winner\":\"abstain\"} if you cannot choose.",
      {{"report_1", first}, {"report_2", second}, {"context", context.to_json()}});
  const auto reply = provider.chat(std::string(kJudgeSystem), prompt);
  int choice = 0;
  try {
    const auto doc = llm::extract_json(reply.text);
    if (doc.is_object() && doc.contains("winner") && doc["winner"].is_number_integer()) {
      choice = doc["winner"].get<int>();
    } else if (doc.is_number_integer()) {
      choice = doc.get<int>();
    }
  } catch (const llm::MalformedResponseError&) {
  }
  if (choice != 1 && choice != 2) return result;
  const bool first_won = choice == 1;
  result.winner = (first_won != result.swapped) ? Winner::kA : Winner::kB;
  return result;
}

PairwiseTally run_pairwise(const nlohmann::json& report_a, const nlohmann::json& report_b,
                           const JudgeContext& context, llm::Provider& provider, int trials,
                           std::uint64_t seed) {
  PairwiseTally tally;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const auto r = pairwise_compare(report_a, report_b, context, provider, rng);
    tally.swapped.push_back(r.swapped);
    if (!r.winner) {
      ++tally.abstentions;
      spdlog::info("pairwise: trial {} discarded, judge abstained", t);
    } else if (*r.winner == Winner::kA) {
      ++tally.a_wins;
    } else {
      ++tally.b_wins;
    }
  }
  return tally;
}

}  // namespace recpilot::eval
