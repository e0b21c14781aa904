#include "recpilot/preference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "recpilot/metrics.hpp"

namespace recpilot::preference {

namespace fs = std::filesystem;

RubricWeights::RubricWeights(const catalog::AttributeCatalog& attributes) {
  weights_.reserve(attributes.size());
  for (const auto& name : attributes.names()) weights_.emplace_back(name, kMinWeight);
}

double RubricWeights::at(const std::string& attribute) const {
  for (const auto& [name, w] : weights_) {
    if (name == attribute) return w;
  }
  throw PreconditionError("rubrics: unknown attribute '" + attribute + "'");
}

bool RubricWeights::contains(const std::string& attribute) const {
  return std::any_of(weights_.begin(), weights_.end(),
                     [&](const auto& e) { return e.first == attribute; });
}

void RubricWeights::set(const std::string& attribute, double weight) {
  for (auto& [name, w] : weights_) {
    if (name == attribute) {
      w = std::clamp(weight, kMinWeight, kMaxWeight);
      return;
    }
  }
  throw PreconditionError("rubrics: unknown attribute '" + attribute + "'");
}

std::vector<std::string> RubricWeights::names() const {
  std::vector<std::string> out;
  out.reserve(weights_.size());
  for (const auto& e : weights_) out.push_back(e.first);
  return out;
}

std::vector<std::string> RubricWeights::by_weight() const {
  std::vector<std::size_t> order(weights_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return weights_[a].second > weights_[b].second;
  });
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(weights_[i].first);
  return out;
}

std::string_view source_name(ExperienceSource source) {
  return source == ExperienceSource::kConsolidation ? "consolidation" : "low_level_mining";
}

PreferenceState init_preference(const std::string& user_id,
                                const catalog::AttributeCatalog& attributes) {
  if (attributes.empty()) throw PreconditionError("init_preference: attribute catalog is empty");
  PreferenceState s;
  s.user_id = user_id;
  s.rubrics = RubricWeights(attributes);
  return s;
}

nlohmann::json state_to_json(const PreferenceState& state) {
  nlohmann::json rubrics = nlohmann::json::array();
  for (const auto& [name, w] : state.rubrics.entries()) {
    rubrics.push_back({{"attribute", name}, {"weight", w}});
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : state.memory) {
    entries.push_back({{"condition", e.condition},
                       {"content", e.content},
                       {"embedding", e.embedding},
                       {"source", source_name(e.source)},
                       {"created_step", e.created_step}});
  }
  return {{"v", 1},
          {"user_id", state.user_id},
          {"step", state.step},
          {"rubrics", rubrics},
          {"entries", entries}};
}

PreferenceState state_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("v").get<int>() != 1) throw ParseError("preference state: unsupported version");
    PreferenceState s;
    s.user_id = doc.at("user_id").get<std::string>();
    s.step = doc.value("step", 0);
    std::vector<std::string> names;
    std::vector<double> weights;
    for (const auto& r : doc.at("rubrics")) {
      names.push_back(r.at("attribute").get<std::string>());
      weights.push_back(r.at("weight").get<double>());
    }
    s.rubrics = RubricWeights(catalog::AttributeCatalog(names));
    for (std::size_t i = 0; i < names.size(); ++i) s.rubrics.set(names[i], weights[i]);
    for (const auto& e : doc.at("entries")) {
      ExperienceEntry entry;
      entry.condition = e.at("condition").get<std::string>();
      entry.content = e.at("content").get<std::string>();
      entry.embedding = e.at("embedding").get<std::vector<double>>();
      const auto src = e.at("source").get<std::string>();
      if (src == "consolidation") {
        entry.source = ExperienceSource::kConsolidation;
      } else if (src == "low_level_mining") {
        entry.source = ExperienceSource::kLowLevelMining;
      } else {
        throw ParseError("preference state: unknown entry source '" + src + "'");
      }
      entry.created_step = e.at("created_step").get<int>();
      s.memory.push_back(std::move(entry));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("preference state: ") + e.what());
  }
}

PreferenceStore::PreferenceStore(std::string directory) : dir_(std::move(directory)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("preference store: cannot create " + dir_ + ": " + ec.message());
}

std::string PreferenceStore::path_for(const std::string& user_id) const {
  return (fs::path(dir_) / (file_stem(user_id) + ".json")).string();
}

bool PreferenceStore::exists(const std::string& user_id) const {
  return fs::exists(path_for(user_id));
}

PreferenceState PreferenceStore::load(const std::string& user_id) const {
  const auto path = path_for(user_id);
  auto doc = nlohmann::json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw ParseError("preference store: " + path + " is not valid JSON");
  return state_from_json(doc);
}

void PreferenceStore::save(const PreferenceState& state) const {
  // Write then rename so a crash never leaves a half-written document.
  const auto path = path_for(state.user_id);
  const auto tmp = path + ".tmp";
  write_file(tmp, state_to_json(state).dump(1) + "\n");
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("preference store: cannot replace " + path + ": " + ec.message());
}

PreferenceState PreferenceStore::init(const std::string& user_id,
                                      const catalog::AttributeCatalog& attributes,
                                      bool overwrite) const {
  if (!overwrite && exists(user_id)) return load(user_id);
  auto state = init_preference(user_id, attributes);
  save(state);
  return state;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw PreconditionError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<ExperienceEntry> retrieve_experience(const PreferenceState& state,
                                                 std::span<const double> query, int m) {
  if (m < 1) throw PreconditionError("retrieve_experience: m must be >= 1");
  struct Scored {
    double sim;
    std::size_t index;
  };
  std::vector<Scored> scored;
  scored.reserve(state.memory.size());
  for (std::size_t i = 0; i < state.memory.size(); ++i) {
    scored.push_back({cosine(query, state.memory[i].embedding), i});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    const int sa = state.memory[a.index].created_step;
    const int sb = state.memory[b.index].created_step;
    if (sa != sb) return sa > sb;
    return a.index > b.index;
  });
  std::vector<ExperienceEntry> out;
  for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(m); ++i) {
    out.push_back(state.memory[scored[i].index]);
  }
  return out;
}

double aspect_ndcg(const AspectRanking& ranking, const std::set<std::string>& purchased, int k) {
  const auto ids = ranking.item_ids();
  return eval::ndcg_at_k(std::span<const std::string>(ids), purchased, k);
}

RubricUpdate optimize_rubrics(PreferenceState& state, std::span<const AspectRanking> rankings,
                              const std::set<std::string>& purchased, double delta, int k) {
  if (rankings.empty()) throw PreconditionError("optimize_rubrics: no aspect rankings");
  RubricUpdate update;
  double best = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const double v = aspect_ndcg(rankings[i], purchased, k);
    update.ndcg.push_back(v);
    if (v > best) {
      best = v;
      update.winner = i;
    }
  }
  if (!update.winner) return update;
  for (const auto& attr : rankings[*update.winner].aspect.attributes) {
    if (state.rubrics.contains(attr)) state.rubrics.boost(attr, delta);
  }
  return update;
}

bool consolidation_triggered(std::span<const std::string> best,
                             std::span<const std::string> baseline,
                             const std::set<std::string>& purchased) {
  auto rank = [](std::span<const std::string> list, const std::string& item) {
    const auto it = std::find(list.begin(), list.end(), item);
    return static_cast<std::size_t>(it - list.begin());  // list.size() when absent
  };
  for (const auto& p : purchased) {
    const auto rb = rank(best, p);
    if (rb < best.size() && rb < rank(baseline, p)) return true;
  }
  return false;
}

std::vector<ExperienceEntry> parse_experience_entries(const std::string& response,
                                                      llm::Provider& provider,
                                                      ExperienceSource source, int step) {
  const auto doc = llm::extract_json(response);
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw llm::MalformedResponseError("experience response lacks an 'entries' array");
  }
  std::vector<ExperienceEntry> out;
  for (const auto& e : doc["entries"]) {
    if (!e.is_object() || !e.contains("condition") || !e.contains("content") ||
        !e["condition"].is_string() || !e["content"].is_string()) {
      throw llm::MalformedResponseError("experience entry needs string 'condition' and 'content'");
    }
    ExperienceEntry entry;
    entry.condition = e["condition"].get<std::string>();
    entry.content = e["content"].get<std::string>();
    if (entry.condition.empty() || entry.content.empty()) {
      throw llm::MalformedResponseError("experience entry with empty condition or content");
    }
    entry.embedding = provider.embed(entry.condition);
    entry.source = source;
    entry.created_step = step;
    out.push_back(std::move(entry));
  }
  return out;
}

namespace {

nlohmann::json describe(const std::string& id, const catalog::ItemCatalog& items) {
  nlohmann::json j = {{"item_id", id}};
  if (const auto* info = items.find(id)) {
    j["title"] = info->title;
    j["attributes"] = info->attributes;
  }
  return j;
}

constexpr std::string_view kSystem =
    "You maintain a shopper's preference memory for a recommendation assistant. "
    "Answer with JSON only.";

}  // namespace

std::size_t consolidate_experience(PreferenceState& state, const AspectRanking& best,
                                   std::span<const std::string> baseline,
                                   const std::set<std::string>& purchased,
                                   const catalog::ItemCatalog& items, llm::Provider& provider) {
  const auto best_ids = best.item_ids();
  if (!consolidation_triggered(best_ids, baseline, purchased)) return 0;
  nlohmann::json data;
  data["aspect"] = aspect_to_json(best.aspect);
  data["best_list"] = nlohmann::json::array();
  for (const auto& id : best_ids) data["best_list"].push_back(describe(id, items));
  data["baseline_list"] = nlohmann::json::array();
  for (const auto& id : baseline) data["baseline_list"].push_back(describe(id, items));
  data["purchased"] = purchased;
  const auto prompt = llm::make_prompt(
      "consolidate_experience",
      "Two rankings of the same candidates are given. The first placed the purchased item "
      "higher. State what the preferred ranking got right as reusable entries: a condition "
      "under which the lesson applies and the preference itself. Respond as "
      "{\"entries\":[{\"condition\":\"...\",\"content\":\"...\"}]}.",
      data);
  const auto reply = provider.chat(std::string(kSystem), prompt);
  auto entries = parse_experience_entries(reply.text, provider, ExperienceSource::kConsolidation,
                                          state.step);
  for (auto& e : entries) state.memory.push_back(std::move(e));
  return entries.size();
}

std::size_t mine_low_level_session(PreferenceState& state, const ingest::Session& session,
                                   const catalog::ItemCatalog& items, llm::Provider& provider) {
  if (session.has_purchase()) {
    throw PreconditionError("mine_low_level_session: session contains a purchase");
  }
  nlohmann::json data;
  data["steps"] = nlohmann::json::array();
  for (const auto& s : session.steps) {
    auto j = describe(s.item_id, items);
    j["action"] = std::string(action_name(s.action));
    data["steps"].push_back(std::move(j));
  }
  const auto prompt = llm::make_prompt(
      "mine_low_level",
      "The shopper browsed these items and left without buying. Infer what put them off or "
      "what they were still missing, as entries with a condition and the preference. Respond "
      "as {\"entries\":[{\"condition\":\"...\",\"content\":\"...\"}]}.",
      data);
  const auto reply = provider.chat(std::string(kSystem), prompt);
  auto entries = parse_experience_entries(reply.text, provider, ExperienceSource::kLowLevelMining,
                                          state.step);
  for (auto& e : entries) state.memory.push_back(std::move(e));
  return entries.size();
}

}  // namespace recpilot::preference
