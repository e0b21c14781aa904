#pragma once

// Per-user preference state: bounded rubric weights over catalog attributes
// plus an append-only memory of condition -> content experience entries.

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recpilot/aspect.hpp"
#include "recpilot/catalog.hpp"
#include "recpilot/ingest.hpp"
#include "recpilot/llm_provider.hpp"

namespace recpilot::preference {

inline constexpr double kMinWeight = 1.0;
inline constexpr double kMaxWeight = 3.0;
inline constexpr double kDefaultDelta = 0.2;

class RubricWeights {
 public:
  RubricWeights() = default;
  /// Every catalog attribute at weight 1.0.
  explicit RubricWeights(const catalog::AttributeCatalog& attributes);

  /// Throws PreconditionError for unknown attributes.
  double at(const std::string& attribute) const;
  bool contains(const std::string& attribute) const;
  /// Stores clamp(weight, kMinWeight, kMaxWeight).
  void set(const std::string& attribute, double weight);
  void boost(const std::string& attribute, double delta) { set(attribute, at(attribute) + delta); }

  std::vector<std::string> names() const;
  const std::vector<std::pair<std::string, double>>& entries() const { return weights_; }
  /// Names sorted by weight descending, catalog order on ties.
  std::vector<std::string> by_weight() const;

  bool operator==(const RubricWeights&) const = default;

 private:
  std::vector<std::pair<std::string, double>> weights_;  // catalog order
};

enum class ExperienceSource { kConsolidation, kLowLevelMining };

std::string_view source_name(ExperienceSource source);

struct ExperienceEntry {
  std::string condition;
  std::string content;
  std::vector<double> embedding;  // unit vector of `condition`
  ExperienceSource source = ExperienceSource::kConsolidation;
  int created_step = 0;

  bool operator==(const ExperienceEntry&) const = default;
};

struct PreferenceState {
  std::string user_id;
  RubricWeights rubrics;
  std::vector<ExperienceEntry> memory;  // append order
  int step = 0;                         // evolution sessions processed

  bool operator==(const PreferenceState&) const = default;
};

PreferenceState init_preference(const std::string& user_id,
                                const catalog::AttributeCatalog& attributes);

nlohmann::json state_to_json(const PreferenceState& state);
PreferenceState state_from_json(const nlohmann::json& doc);

/// Directory of `<user_id>.json` documents.
class PreferenceStore {
 public:
  explicit PreferenceStore(std::string directory);

  const std::string& directory() const { return dir_; }
  std::string path_for(const std::string& user_id) const;
  bool exists(const std::string& user_id) const;
  PreferenceState load(const std::string& user_id) const;
  void save(const PreferenceState& state) const;
  /// Returns the stored state when present, unless `overwrite` is set, in
  /// which case a fresh state replaces it.
  PreferenceState init(const std::string& user_id, const catalog::AttributeCatalog& attributes,
                       bool overwrite = false) const;

 private:
  std::string dir_;
};

double cosine(std::span<const double> a, std::span<const double> b);

/// Up to m entries by cosine to `query` descending; newer entries first on ties.
std::vector<ExperienceEntry> retrieve_experience(const PreferenceState& state,
                                                 std::span<const double> query, int m);

double aspect_ndcg(const AspectRanking& ranking, const std::set<std::string>& purchased, int k);

struct RubricUpdate {
  std::vector<double> ndcg;          // one per aspect ranking
  std::optional<std::size_t> winner;  // absent when every NDCG is zero
};

/// Best-of-n rubric step: the aspect list with the highest NDCG@k against the
/// purchased items (lowest index on ties) has each of its attributes boosted
/// by delta.
RubricUpdate optimize_rubrics(PreferenceState& state, std::span<const AspectRanking> rankings,
                              const std::set<std::string>& purchased, double delta, int k);

/// True when some purchased item sits strictly higher in `best` than in
/// `baseline` (absent counts as below every listed item).
bool consolidation_triggered(std::span<const std::string> best,
                             std::span<const std::string> baseline,
                             const std::set<std::string>& purchased);

/// Parses {"entries":[{"condition","content"}]} and embeds every condition.
std::vector<ExperienceEntry> parse_experience_entries(const std::string& response,
                                                      llm::Provider& provider,
                                                      ExperienceSource source, int step);

/// Asks the provider for corrective entries contrasting the two lists and
/// appends them. Returns the number appended; the state is untouched on
/// provider failure.
std::size_t consolidate_experience(PreferenceState& state, const AspectRanking& best,
                                   std::span<const std::string> baseline,
                                   const std::set<std::string>& purchased,
                                   const catalog::ItemCatalog& items, llm::Provider& provider);

/// Mines negative preferences from a session without any purchase. Rubrics
/// are never modified.
std::size_t mine_low_level_session(PreferenceState& state, const ingest::Session& session,
                                   const catalog::ItemCatalog& items, llm::Provider& provider);

}  // namespace recpilot::preference
