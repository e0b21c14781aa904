#include "recpilot/ranking.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace recpilot::ranking {

using ingest::Vocabulary;

namespace {

constexpr std::string_view kSystem =
    "You are the analysis engine of a shopping research assistant. Use only the items and "
    "attributes given in the data block. Answer with JSON only.";

nlohmann::json describe(const std::string& id, const catalog::ItemCatalog& items) {
  nlohmann::json j = {{"item_id", id}};
  if (const auto* info = items.find(id)) {
    j["title"] = info->title;
    j["attributes"] = info->attributes;
  }
  return j;
}

nlohmann::json steps_json(const std::vector<ingest::Step>& steps,
                          const catalog::ItemCatalog* items = nullptr) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json j = {{"action", std::string(action_name(s.action))}, {"item_id", s.item_id}};
    if (items) {
      if (const auto* info = items->find(s.item_id)) j["title"] = info->title;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

bool id_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Vocabulary item ids appearing as whole words in `text`.
std::set<std::string> mentioned_items(std::string_view text, const Vocabulary& vocab) {
  std::set<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !id_char(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && id_char(text[j])) ++j;
    if (j > i) {
      const std::string word(text.substr(i, j - i));
      if (vocab.find_item(word)) out.insert(word);
    }
    i = j;
  }
  return out;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

IntentSummary summarize_intent(const RankingContext& ctx, llm::Provider& provider) {
  if (ctx.candidates.empty()) throw PreconditionError("summarize_intent: empty candidate set");
  nlohmann::json data;
  data["trajectories"] = nlohmann::json::array();
  std::set<std::vector<Token>> seen;
  for (const auto& c : ctx.candidates.candidates) {
    if (!seen.insert(c.trajectory).second) continue;
    data["trajectories"].push_back(steps_json(trajectory_steps(c.trajectory, ctx.vocab), &ctx.items));
  }
  data["candidates"] = nlohmann::json::array();
  for (const auto& c : ctx.candidates.candidates) {
    auto j = describe(ctx.vocab.symbol(c.item), ctx.items);
    j["score"] = c.score;
    data["candidates"].push_back(std::move(j));
  }
  const auto prompt = llm::make_prompt(
      "summarize_intent",
      "These exploration paths were produced by a behavior simulator for one shopper. Write a "
      "short statement of what the shopper is trying to decide and which item traits seem to "
      "matter. Respond as {\"summary\":\"...\"}.",
      data);
  const auto reply = provider.chat(std::string(kSystem), prompt);
  std::string text;
  try {
    const auto doc = llm::extract_json(reply.text);
    if (doc.is_object() && doc.contains("summary") && doc["summary"].is_string()) {
      text = doc["summary"].get<std::string>();
    }
  } catch (const llm::MalformedResponseError&) {
  }
  if (text.empty()) text = std::string(trim(reply.text));
  if (text.empty()) throw llm::MalformedResponseError("summarize_intent: empty summary");
  return {text, provider.embed(text)};
}

std::vector<Aspect> validate_aspects(const nlohmann::json& doc,
                                     const catalog::AttributeCatalog& attributes, int n_max) {
  const nlohmann::json* list = nullptr;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object() && doc.contains("aspects") && doc["aspects"].is_array()) {
    list = &doc["aspects"];
  }
  std::vector<Aspect> out;
  if (!list) return out;
  std::set<std::set<std::string>> seen_sets;
  for (const auto& raw : *list) {
    if (static_cast<int>(out.size()) >= n_max) break;
    if (!raw.is_object()) continue;
    Aspect a = aspect_from_json(raw);
    std::vector<std::string> kept;
    for (const auto& attr : a.attributes) {
      if (attributes.contains(attr) &&
          std::find(kept.begin(), kept.end(), attr) == kept.end()) {
        kept.push_back(attr);
      }
    }
    if (kept.empty()) continue;
    if (!seen_sets.insert(std::set<std::string>(kept.begin(), kept.end())).second) continue;
    a.attributes = std::move(kept);
    if (a.name.empty()) {
      for (const auto& attr : a.attributes) a.name += (a.name.empty() ? "" : " & ") + attr;
    }
    out.push_back(std::move(a));
  }
  return out;
}

Aspect fallback_aspect(const preference::RubricWeights& rubrics) {
  auto names = rubrics.by_weight();
  if (names.empty()) throw PreconditionError("fallback_aspect: no rubric attributes");
  if (names.size() > 2) names.resize(2);
  Aspect a;
  a.attributes = names;
  a.name = "Top-weighted attributes";
  a.rationale = "Default aspect built from the highest rubric weights.";
  return a;
}

std::vector<Aspect> decompose_aspects(const IntentSummary& intent,
                                      std::span<const preference::ExperienceEntry> experience,
                                      const preference::RubricWeights& rubrics,
                                      const catalog::AttributeCatalog& attributes,
                                      llm::Provider& provider, int n_max) {
  if (n_max < 1) throw PreconditionError("decompose_aspects: n_max must be >= 1");
  nlohmann::json data;
  data["intent"] = intent.text;
  data["experience"] = nlohmann::json::array();
  for (const auto& e : experience) {
    data["experience"].push_back({{"condition", e.condition}, {"content", e.content}});
  }
  data["rubrics"] = nlohmann::json::array();
  for (const auto& [name, w] : rubrics.entries()) {
    data["rubrics"].push_back({{"attribute", name}, {"weight", w}});
  }
  data["attributes"] = attributes.names();
  data["n_max"] = n_max;
  const auto prompt = llm::make_prompt(
      "decompose_aspects",
      "Split the shopper's interest into at most n_max distinct facets. Each facet is a named "
      "subset of the listed attributes with a one-line reason. Respond as "
      "{\"aspects\":[{\"name\":\"...\",\"attributes\":[\"...\"],\"rationale\":\"...\"}]}.",
      data);
  try {
    const auto reply = provider.chat(std::string(kSystem), prompt);
    auto aspects = validate_aspects(llm::extract_json(reply.text), attributes, n_max);
    if (!aspects.empty()) return aspects;
    spdlog::warn("decompose_aspects: no valid aspect in the response, using fallback");
  } catch (const llm::ProviderError& e) {
    spdlog::warn("decompose_aspects: {}; using fallback", e.what());
  }
  return {fallback_aspect(rubrics)};
}

namespace {

std::map<std::string, int> parse_scores(const std::string& text, const Aspect& aspect) {
  std::map<std::string, int> out;
  nlohmann::json doc;
  try {
    doc = llm::extract_json(text);
  } catch (const llm::MalformedResponseError&) {
    return out;
  }
  // A bare number answers a single-attribute aspect.
  if (doc.is_number() && aspect.attributes.size() == 1) {
    doc = nlohmann::json{{aspect.attributes.front(), doc}};
  }
  const nlohmann::json* scores = &doc;
  if (doc.is_object() && doc.contains("scores")) scores = &doc["scores"];
  if (!scores->is_object()) return out;
  for (const auto& attr : aspect.attributes) {
    if (!scores->contains(attr)) continue;
    const auto& v = (*scores)[attr];
    if (!v.is_number()) continue;
    const double x = v.get<double>();
    if (!std::isfinite(x)) continue;
    out[attr] = std::clamp(static_cast<int>(std::lround(x)), kMinAttributeScore, kMaxAttributeScore);
  }
  return out;
}

}  // namespace

std::map<std::string, int> score_item_attributes(const catalog::ItemInfo& item,
                                                 const Aspect& aspect, const IntentSummary& intent,
                                                 llm::Provider& provider) {
  nlohmann::json data;
  data["intent"] = intent.text;
  data["aspect"] = {{"name", aspect.name}, {"attributes", aspect.attributes}};
  data["item"] = item.to_json();
  const auto prompt = llm::make_prompt(
      "score_attributes",
      "Rate how well the item matches the shopper on each listed attribute, from 1 (poor) to "
      "5 (ideal). Respond as {\"scores\":{\"<attribute>\":<integer>}}.",
      data);
  auto scores = parse_scores(provider.chat(std::string(kSystem), prompt).text, aspect);
  if (scores.size() < aspect.attributes.size()) {
    const auto retry = parse_scores(provider.chat(std::string(kSystem), prompt).text, aspect);
    for (const auto& [k, v] : retry) scores[k] = v;
  }
  for (const auto& attr : aspect.attributes) {
    if (!scores.count(attr)) {
      spdlog::warn("score_attributes: no usable score for {} / {}, using {}", item.item_id, attr,
                   kNeutralAttributeScore);
      scores[attr] = kNeutralAttributeScore;
    }
  }
  return scores;
}

AspectRanking rank_aspect(std::span<const ScoredCandidate> candidates, const Aspect& aspect,
                          const preference::RubricWeights& rubrics, double delta) {
  if (aspect.attributes.empty()) throw PreconditionError("rank_aspect: aspect has no attributes");
  AspectRanking out;
  out.aspect = aspect;
  const double n = static_cast<double>(aspect.attributes.size());
  for (const auto& c : candidates) {
    RankedEntry e;
    e.item_id = c.item_id;
    e.token = c.token;
    e.candidate_score = c.candidate_score;
    double sum = 0.0;
    for (const auto& attr : aspect.attributes) {
      const auto it = c.attribute_scores.find(attr);
      if (it == c.attribute_scores.end()) {
        throw PreconditionError("rank_aspect: no score for " + c.item_id + " / " + attr);
      }
      const double w = std::clamp(rubrics.at(attr) + delta, preference::kMinWeight,
                                  preference::kMaxWeight);
      sum += w * it->second;
      e.attribute_scores[attr] = it->second;
    }
    e.score = sum / n;
    out.entries.push_back(std::move(e));
  }
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  return out;
}

std::vector<RankedEntry> aggregate_overall(std::span<const AspectRanking> rankings) {
  if (rankings.empty()) return {};
  std::vector<RankedEntry> out = rankings.front().entries;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.size(); ++i) index.emplace(out[i].item_id, i);
  for (std::size_t r = 1; r < rankings.size(); ++r) {
    if (rankings[r].entries.size() != out.size()) {
      throw Error("aggregate_overall: aspect rankings cover different candidates");
    }
    for (const auto& e : rankings[r].entries) {
      const auto it = index.find(e.item_id);
      if (it == index.end()) {
        throw Error("aggregate_overall: candidate " + e.item_id + " missing from an aspect");
      }
      auto& acc = out[it->second];
      acc.score += e.score;
      for (const auto& [k, v] : e.attribute_scores) acc.attribute_scores[k] = v;
    }
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

RankingResult rank_candidates(const RankingContext& ctx, const IntentSummary& intent,
                              std::vector<Aspect> aspects,
                              const preference::RubricWeights& rubrics, double delta,
                              llm::Provider& provider, std::size_t jobs) {
  RankingResult result;
  result.aspects = std::move(aspects);
  const auto& cands = ctx.candidates.candidates;
  const std::size_t na = result.aspects.size();
  const std::size_t nc = cands.size();
  std::vector<std::map<std::string, int>> scores(na * nc);
  parallel_for(na * nc, jobs, [&](std::size_t idx) {
    const auto& aspect = result.aspects[idx / nc];
    const auto& id = ctx.vocab.symbol(cands[idx % nc].item);
    // Items without metadata are still scored, from the id alone.
    const auto* known = ctx.items.find(id);
    const catalog::ItemInfo item = known ? *known : catalog::ItemInfo{id, {}, {}};
    scores[idx] = score_item_attributes(item, aspect, intent, provider);
  });
  for (std::size_t a = 0; a < na; ++a) {
    std::vector<ScoredCandidate> scored;
    scored.reserve(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      scored.push_back({ctx.vocab.symbol(cands[c].item), cands[c].item, cands[c].score,
                        scores[a * nc + c]});
    }
    result.rankings.push_back(rank_aspect(scored, result.aspects[a], rubrics, delta));
  }
  if (na > 0) {
    result.overall = aggregate_overall(result.rankings);
  } else {
    for (const auto& c : cands) {
      result.overall.push_back({ctx.vocab.symbol(c.item), c.item, 0.0, c.score, {}});
    }
    std::sort(result.overall.begin(), result.overall.end(), ranks_before);
  }
  return result;
}

std::vector<ingest::Step> trajectory_steps(std::span<const Token> tokens,
                                           const Vocabulary& vocab) {
  std::vector<ingest::Step> out;
  std::optional<Action> current;
  for (Token t : tokens) {
    if (auto a = Vocabulary::action_of(t)) {
      current = a;
    } else if (Vocabulary::is_item(t) && current) {
      out.push_back({*current, vocab.symbol(t)});
    }
  }
  return out;
}

std::set<std::string> allowed_items(const decode::CandidateSet& candidates,
                                    const Vocabulary& vocab) {
  std::set<std::string> out;
  for (const auto& c : candidates.candidates) {
    out.insert(vocab.symbol(c.item));
    for (Token t : c.trajectory) {
      if (Vocabulary::is_item(t)) out.insert(vocab.symbol(t));
    }
  }
  return out;
}

namespace {

struct SectionRequest {
  std::string task;
  std::string instructions;
  nlohmann::json data;
};

// One provider round trip with a single retry on schema violations.
template <typename Parse>
auto request_section(const SectionRequest& req, llm::Provider& provider, Parse&& parse) {
  const auto prompt = llm::make_prompt(req.task, req.instructions, req.data);
  std::string problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = provider.chat(std::string(kSystem), prompt);
    try {
      return parse(llm::extract_json(reply.text));
    } catch (const llm::MalformedResponseError& e) {
      problem = e.what();
      spdlog::warn("{}: schema violation ({}), attempt {}", req.task, problem, attempt + 1);
    }
  }
  throw llm::MalformedResponseError(req.task + ": response violates the section schema: " +
                                    problem);
}

void check_mentions(std::string_view text, const std::set<std::string>& allowed,
                    const Vocabulary& vocab) {
  for (const auto& id : mentioned_items(text, vocab)) {
    if (!allowed.count(id)) {
      throw llm::MalformedResponseError("text mentions item '" + id + "' outside the candidate set");
    }
  }
}

std::map<std::string, std::string> parse_rationales(const nlohmann::json& doc,
                                                    const std::vector<std::string>& ids,
                                                    const std::set<std::string>& allowed,
                                                    const Vocabulary& vocab) {
  if (!doc.is_object() || !doc.contains("rationales") || !doc["rationales"].is_object()) {
    throw llm::MalformedResponseError("missing 'rationales' object");
  }
  std::map<std::string, std::string> out;
  for (const auto& id : ids) {
    const auto& r = doc["rationales"];
    if (!r.contains(id) || !r[id].is_string() || r[id].get<std::string>().empty()) {
      throw llm::MalformedResponseError("no rationale for item '" + id + "'");
    }
    out[id] = r[id].get<std::string>();
    check_mentions(out[id], allowed, vocab);
  }
  return out;
}

nlohmann::json entry_json(const RankedEntry& e, const catalog::ItemCatalog& items) {
  auto j = describe(e.item_id, items);
  j["score"] = e.score;
  j["attribute_scores"] = e.attribute_scores;
  return j;
}

}  // namespace

Report assemble_report(const RankingContext& ctx, const IntentSummary& intent,
                       const RankingResult& ranked, llm::Provider& provider) {
  if (ctx.candidates.empty()) throw PreconditionError("assemble_report: empty candidate set");
  const auto allowed = allowed_items(ctx.candidates, ctx.vocab);
  Report report;
  report.intent = intent.text;
  check_mentions(report.intent, allowed, ctx.vocab);

  // Trajectory of the top overall item.
  const Token top = ranked.overall.empty() ? ctx.candidates.candidates.front().item
                                           : ranked.overall.front().token;
  const auto& cands = ctx.candidates.candidates;
  const auto top_it = std::find_if(cands.begin(), cands.end(),
                                   [&](const decode::Candidate& c) { return c.item == top; });
  if (top_it == cands.end()) throw Error("assemble_report: top item is not a candidate");
  report.trajectory = trajectory_steps(top_it->trajectory, ctx.vocab);

  report.narrative = request_section(
      {"trajectory_narrative",
       "Describe this simulated exploration path in two or three sentences. Make clear it is a "
       "projection, not something the shopper did. Respond as {\"narrative\":\"...\"}.",
       {{"steps", steps_json(report.trajectory, &ctx.items)}, {"intent", intent.text}}},
      provider, [&](const nlohmann::json& doc) {
        if (!doc.is_object() || !doc.contains("narrative") || !doc["narrative"].is_string() ||
            doc["narrative"].get<std::string>().empty()) {
          throw llm::MalformedResponseError("missing 'narrative' string");
        }
        auto text = doc["narrative"].get<std::string>();
        check_mentions(text, allowed, ctx.vocab);
        return text;
      });

  // Overall list.
  {
    nlohmann::json data;
    data["intent"] = intent.text;
    data["aspects"] = nlohmann::json::array();
    for (const auto& a : ranked.aspects) data["aspects"].push_back(aspect_to_json(a));
    data["trajectory"] = steps_json(report.trajectory);
    data["items"] = nlohmann::json::array();
    for (const auto& e : ranked.overall) data["items"].push_back(entry_json(e, ctx.items));
    const auto ids = item_ids(ranked.overall);
    const auto rationales = request_section(
        {"overall_rationales",
         "For each ranked item give one or two sentences on why it sits where it does, citing "
         "its attribute scores and the exploration path. Respond as "
         "{\"rationales\":{\"<item_id>\":\"...\"}}.",
         data},
        provider, [&](const nlohmann::json& doc) {
          return parse_rationales(doc, ids, allowed, ctx.vocab);
        });
    int rank = 0;
    for (const auto& e : ranked.overall) {
      report.overall.push_back({++rank, e.item_id, e.score, rationales.at(e.item_id)});
    }
  }

  // One section per aspect.
  for (const auto& r : ranked.rankings) {
    nlohmann::json data;
    data["intent"] = intent.text;
    data["aspect"] = aspect_to_json(r.aspect);
    data["items"] = nlohmann::json::array();
    for (const auto& e : r.entries) data["items"].push_back(entry_json(e, ctx.items));
    const auto ids = r.item_ids();
    const auto rationales = request_section(
        {"aspect_rationales",
         "For each item explain its position using only the attributes of this facet. "
         "Respond as {\"rationales\":{\"<item_id>\":\"...\"}}.",
         data},
        provider, [&](const nlohmann::json& doc) {
          return parse_rationales(doc, ids, allowed, ctx.vocab);
        });
    ReportAspect section;
    section.name = r.aspect.name;
    section.attributes = r.aspect.attributes;
    int rank = 0;
    for (const auto& e : r.entries) {
      section.items.push_back({++rank, e.item_id, e.score, rationales.at(e.item_id)});
    }
    report.aspects.push_back(std::move(section));
  }
  return report;
}

namespace {

nlohmann::json items_json(const std::vector<ReportItem>& items) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& i : items) {
    arr.push_back(
        {{"rank", i.rank}, {"item_id", i.item_id}, {"score", i.score}, {"rationale", i.rationale}});
  }
  return arr;
}

std::vector<ReportItem> items_from_json(const nlohmann::json& arr) {
  std::vector<ReportItem> out;
  for (const auto& j : arr) {
    out.push_back({j.at("rank").get<int>(), j.at("item_id").get<std::string>(),
                   j.at("score").get<double>(), j.at("rationale").get<std::string>()});
  }
  return out;
}

}  // namespace

nlohmann::json report_to_json(const Report& report) {
  nlohmann::json aspects = nlohmann::json::array();
  for (const auto& a : report.aspects) {
    aspects.push_back({{"name", a.name}, {"attributes", a.attributes}, {"items", items_json(a.items)}});
  }
  return {{"trajectory",
           {{"simulated", true}, {"narrative", report.narrative}, {"steps", steps_json(report.trajectory)}}},
          {"intent", report.intent},
          {"overall", items_json(report.overall)},
          {"aspects", aspects}};
}

Report report_from_json(const nlohmann::json& doc) {
  try {
    Report r;
    const auto& t = doc.at("trajectory");
    r.narrative = t.value("narrative", std::string());
    for (const auto& s : t.at("steps")) {
      const auto label = s.at("action").get<std::string>();
      const auto action = parse_action(label);
      if (!action) throw ParseError("report: unknown action '" + label + "'");
      r.trajectory.push_back({*action, s.at("item_id").get<std::string>()});
    }
    r.intent = doc.at("intent").get<std::string>();
    r.overall = items_from_json(doc.at("overall"));
    for (const auto& a : doc.at("aspects")) {
      r.aspects.push_back({a.at("name").get<std::string>(),
                           a.at("attributes").get<std::vector<std::string>>(),
                           items_from_json(a.at("items"))});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

namespace {

void check_items(const nlohmann::json& arr, const std::string& where,
                 const std::set<std::string>& allowed, std::vector<std::string>& problems) {
  if (!arr.is_array()) {
    problems.push_back(where + ": not an array");
    return;
  }
  int expected = 1;
  std::set<std::string> seen;
  for (const auto& i : arr) {
    if (!i.is_object()) {
      problems.push_back(where + ": entry is not an object");
      continue;
    }
    if (i.size() != 4 || !i.contains("rank") || !i.contains("item_id") || !i.contains("score") ||
        !i.contains("rationale")) {
      problems.push_back(where + ": entry needs exactly rank, item_id, score, rationale");
      continue;
    }
    if (!i["rank"].is_number_integer() || i["rank"].get<int>() != expected) {
      problems.push_back(where + ": ranks must run 1, 2, ...");
    }
    ++expected;
    if (!i["score"].is_number()) problems.push_back(where + ": score must be a number");
    if (!i["rationale"].is_string() || i["rationale"].get<std::string>().empty()) {
      problems.push_back(where + ": rationale must be a nonempty string");
    }
    if (!i["item_id"].is_string() || i["item_id"].get<std::string>().empty()) {
      problems.push_back(where + ": item_id must be a nonempty string");
      continue;
    }
    const auto id = i["item_id"].get<std::string>();
    if (!seen.insert(id).second) problems.push_back(where + ": duplicate item " + id);
    if (!allowed.empty() && !allowed.count(id)) {
      problems.push_back(where + ": item " + id + " is not a candidate");
    }
  }
}

}  // namespace

std::vector<std::string> validate_report_json(const nlohmann::json& doc,
                                              const std::set<std::string>& allowed) {
  std::vector<std::string> problems;
  if (!doc.is_object()) return {"report is not an object"};
  for (const char* key : {"trajectory", "intent", "overall", "aspects"}) {
    if (!doc.contains(key)) problems.push_back(std::string("missing section '") + key + "'");
  }
  if (doc.size() != 4) problems.push_back("report must have exactly four sections");
  if (!problems.empty()) return problems;

  const auto& t = doc["trajectory"];
  if (!t.is_object() || !t.contains("steps") || !t["steps"].is_array()) {
    problems.push_back("trajectory: needs a steps array");
  } else {
    if (!t.contains("simulated") || t["simulated"] != true) {
      problems.push_back("trajectory: must be labeled simulated");
    }
    if (t.contains("narrative") && !t["narrative"].is_string()) {
      problems.push_back("trajectory: narrative must be a string");
    }
    for (const auto& s : t["steps"]) {
      if (!s.is_object() || !s.contains("action") || !s.contains("item_id") ||
          !s["action"].is_string() || !s["item_id"].is_string() ||
          !parse_action(s["action"].get<std::string>())) {
        problems.push_back("trajectory: malformed step");
        continue;
      }
      const auto id = s["item_id"].get<std::string>();
      if (!allowed.empty() && !allowed.count(id)) {
        problems.push_back("trajectory: item " + id + " is not a candidate");
      }
    }
  }
  if (!doc["intent"].is_string() || doc["intent"].get<std::string>().empty()) {
    problems.push_back("intent: must be a nonempty string");
  }
  check_items(doc["overall"], "overall", allowed, problems);
  if (!doc["aspects"].is_array()) {
    problems.push_back("aspects: not an array");
  } else {
    for (const auto& a : doc["aspects"]) {
      if (!a.is_object() || !a.contains("name") || !a["name"].is_string() ||
          !a.contains("attributes") || !a["attributes"].is_array() || a["attributes"].empty() ||
          !a.contains("items")) {
        problems.push_back("aspects: entry needs name, nonempty attributes and items");
        continue;
      }
      check_items(a["items"], "aspect '" + a["name"].get<std::string>() + "'", allowed, problems);
    }
  }
  return problems;
}

std::set<std::string> report_item_ids(const nlohmann::json& doc) {
  std::set<std::string> out;
  auto take = [&](const nlohmann::json& arr) {
    if (!arr.is_array()) return;
    for (const auto& i : arr) {
      if (i.is_object() && i.contains("item_id") && i["item_id"].is_string()) {
        out.insert(i["item_id"].get<std::string>());
      }
    }
  };
  if (doc.contains("trajectory") && doc["trajectory"].is_object()) take(doc["trajectory"]["steps"]);
  if (doc.contains("overall")) take(doc["overall"]);
  if (doc.contains("aspects") && doc["aspects"].is_array()) {
    for (const auto& a : doc["aspects"]) {
      if (a.is_object() && a.contains("items")) take(a["items"]);
    }
  }
  return out;
}

std::string render_report(const Report& report, ReportFormat format) {
  if (format == ReportFormat::kJson) return report_to_json(report).dump(2) + "\n";
  std::string md;
  md += "# Recommendation Report\n\n";
  md += "## Exploration Trajectory\n\n";
  md += "_Simulated exploration path: generated by the behavior model, not observed activity._\n\n";
  if (!report.narrative.empty()) md += report.narrative + "\n\n";
  if (report.trajectory.empty()) {
    md += "No exploration steps were simulated before the decision.\n\n";
  } else {
    int i = 0;
    for (const auto& s : report.trajectory) {
      md += std::to_string(++i) + ". " + std::string(action_name(s.action)) + " `" + s.item_id + "`\n";
    }
    md += "\n";
  }
  md += "## Intent Summary\n\n" + report.intent + "\n\n";
  md += "## Primary Recommendations\n\n";
  for (const auto& item : report.overall) {
    md += std::to_string(item.rank) + ". **" + item.item_id + "** (score " +
          format_score(item.score) + "): " + item.rationale + "\n";
  }
  md += "\n## Multi-Aspect Recommendations\n\n";
  if (report.aspects.empty()) {
    md += "No aspect breakdown is available for this session.\n";
  }
  for (const auto& a : report.aspects) {
    std::string attrs;
    for (const auto& attr : a.attributes) attrs += (attrs.empty() ? "" : ", ") + attr;
    md += "### " + a.name + " (" + attrs + ")\n\n";
    for (const auto& item : a.items) {
      md += std::to_string(item.rank) + ". **" + item.item_id + "** (score " +
            format_score(item.score) + "): " + item.rationale + "\n";
    }
    md += "\n";
  }
  return md;
}

}  // namespace recpilot::ranking
