#include "recpilot/aspect.hpp"

namespace recpilot {

bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.candidate_score != b.candidate_score) return a.candidate_score > b.candidate_score;
  return a.token < b.token;
}

std::vector<std::string> item_ids(const std::vector<RankedEntry>& entries) {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.item_id);
  return out;
}

std::vector<std::string> AspectRanking::item_ids() const { return recpilot::item_ids(entries); }

nlohmann::json aspect_to_json(const Aspect& aspect) {
  return {{"name", aspect.name}, {"attributes", aspect.attributes}, {"rationale", aspect.rationale}};
}

Aspect aspect_from_json(const nlohmann::json& doc) {
  Aspect a;
  a.name = doc.value("name", std::string());
  a.rationale = doc.value("rationale", std::string());
  if (doc.contains("attributes") && doc["attributes"].is_array()) {
    for (const auto& v : doc["attributes"]) {
      if (v.is_string()) a.attributes.push_back(v.get<std::string>());
    }
  }
  return a;
}

}  // namespace recpilot
