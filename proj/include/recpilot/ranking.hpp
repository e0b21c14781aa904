#pragma once

// Candidate set -> intent summary -> aspects -> per-aspect weighted scores ->
// overall list -> four-part decision-support report.

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/aspect.hpp"
#include "recpilot/catalog.hpp"
#include "recpilot/decode.hpp"
#include "recpilot/ingest.hpp"
#include "recpilot/llm_provider.hpp"
#include "recpilot/preference.hpp"

namespace recpilot::ranking {

inline constexpr int kMinAttributeScore = 1;
inline constexpr int kMaxAttributeScore = 5;
inline constexpr int kNeutralAttributeScore = 3;
inline constexpr int kDefaultMaxAspects = 3;

struct IntentSummary {
  std::string text;
  std::vector<double> embedding;
};

/// Everything a prompt needs to talk about the candidates.
struct RankingContext {
  const decode::CandidateSet& candidates;
  const ingest::Vocabulary& vocab;
  const catalog::ItemCatalog& items;
  const catalog::AttributeCatalog& attributes;
};

IntentSummary summarize_intent(const RankingContext& ctx, llm::Provider& provider);

/// Validates provider aspects against the catalog: unknown and duplicate
/// attributes are dropped, empty or repeated attribute sets are dropped and at
/// most n_max survive.
std::vector<Aspect> validate_aspects(const nlohmann::json& doc,
                                     const catalog::AttributeCatalog& attributes, int n_max);

/// The two highest-weighted attributes (catalog order on ties).
Aspect fallback_aspect(const preference::RubricWeights& rubrics);

std::vector<Aspect> decompose_aspects(const IntentSummary& intent,
                                      std::span<const preference::ExperienceEntry> experience,
                                      const preference::RubricWeights& rubrics,
                                      const catalog::AttributeCatalog& attributes,
                                      llm::Provider& provider, int n_max = kDefaultMaxAspects);

/// Scores of one item against each attribute of `aspect`, from one prompt.
/// Values are clamped to [1, 5]; an unparsable answer is retried once, after
/// which unresolved attributes get 3.
std::map<std::string, int> score_item_attributes(const catalog::ItemInfo& item,
                                                 const Aspect& aspect, const IntentSummary& intent,
                                                 llm::Provider& provider);

struct ScoredCandidate {
  std::string item_id;
  Token token = 0;
  double candidate_score = 0.0;
  std::map<std::string, int> attribute_scores;
};

/// s(D) = (1/|D|) * sum_a clamp(w_a + delta) * s_a, sorted with ranks_before.
AspectRanking rank_aspect(std::span<const ScoredCandidate> candidates, const Aspect& aspect,
                          const preference::RubricWeights& rubrics, double delta);

/// Sum of per-aspect scores; every candidate must appear in every ranking.
std::vector<RankedEntry> aggregate_overall(std::span<const AspectRanking> rankings);

struct RankingResult {
  std::vector<Aspect> aspects;
  std::vector<AspectRanking> rankings;
  std::vector<RankedEntry> overall;
};

/// Scores every candidate on every aspect attribute (concurrently, up to
/// `jobs` prompts in flight) and ranks.
RankingResult rank_candidates(const RankingContext& ctx, const IntentSummary& intent,
                              std::vector<Aspect> aspects,
                              const preference::RubricWeights& rubrics, double delta,
                              llm::Provider& provider, std::size_t jobs = 1);

// Report ------------------------------------------------------------------

struct ReportItem {
  int rank = 0;
  std::string item_id;
  double score = 0.0;
  std::string rationale;

  bool operator==(const ReportItem&) const = default;
};

struct ReportAspect {
  std::string name;
  std::vector<std::string> attributes;
  std::vector<ReportItem> items;

  bool operator==(const ReportAspect&) const = default;
};

struct Report {
  std::vector<ingest::Step> trajectory;  // simulated, not observed
  std::string narrative;
  std::string intent;
  std::vector<ReportItem> overall;
  std::vector<ReportAspect> aspects;

  bool operator==(const Report&) const = default;
};

/// Steps encoded in a (possibly unterminated) token stream; items before the
/// first action are skipped.
std::vector<ingest::Step> trajectory_steps(std::span<const Token> tokens,
                                           const ingest::Vocabulary& vocab);

/// Item ids the report may mention: the candidates plus items of their
/// retained trajectories.
std::set<std::string> allowed_items(const decode::CandidateSet& candidates,
                                    const ingest::Vocabulary& vocab);

/// Builds the four sections. Provider output that violates the section
/// schema (missing rationales, unknown items) is retried once, then raises.
Report assemble_report(const RankingContext& ctx, const IntentSummary& intent,
                       const RankingResult& ranked, llm::Provider& provider);

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& doc);

/// Structural check of a report document. Returns human-readable problems;
/// empty means valid. When `allowed` is nonempty every item id must be in it.
std::vector<std::string> validate_report_json(const nlohmann::json& doc,
                                              const std::set<std::string>& allowed = {});

/// Every item id the document mentions, in any section.
std::set<std::string> report_item_ids(const nlohmann::json& doc);

enum class ReportFormat { kMarkdown, kJson };

std::string render_report(const Report& report, ReportFormat format);

}  // namespace recpilot::ranking
