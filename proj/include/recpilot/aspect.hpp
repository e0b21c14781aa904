#pragma once

// Value types shared by the ranking and preference stages.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/common.hpp"

namespace recpilot {

/// A named facet of user interest over a subset of catalog attributes.
struct Aspect {
  std::string name;
  std::vector<std::string> attributes;
  std::string rationale;

  bool operator==(const Aspect&) const = default;
};

struct RankedEntry {
  std::string item_id;
  Token token = 0;
  double score = 0.0;
  double candidate_score = 0.0;  // simulator log-likelihood, used for tie-breaks
  std::map<std::string, int> attribute_scores;

  bool operator==(const RankedEntry&) const = default;
};

/// Score descending, then candidate log-likelihood descending, then lower token.
bool ranks_before(const RankedEntry& a, const RankedEntry& b);

struct AspectRanking {
  Aspect aspect;
  std::vector<RankedEntry> entries;  // sorted with ranks_before

  std::vector<std::string> item_ids() const;
};

std::vector<std::string> item_ids(const std::vector<RankedEntry>& entries);

nlohmann::json aspect_to_json(const Aspect& aspect);
Aspect aspect_from_json(const nlohmann::json& doc);

}  // namespace recpilot
