#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include "recpilot/llm_provider.hpp"

namespace recpilot::llm {

namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> ids_of(const json& arr) {
  std::vector<std::string> out;
  if (!arr.is_array()) return out;
  for (const auto& x : arr) {
    if (x.is_object() && x.contains("item_id") && x["item_id"].is_string()) {
      out.push_back(x["item_id"].get<std::string>());
    } else if (x.is_string()) {
      out.push_back(x.get<std::string>());
    }
  }
  return out;
}

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) return std::nullopt;
  const auto s = v.get<std::string>();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

std::string summarize_intent(const json& data) {
  auto ids = ids_of(data.value("candidates", json::array()));
  if (ids.size() > 3) ids.resize(3);
  return json{{"summary", "Simulated intent: the shopper appears to be weighing " +
                              join(ids, ", ") + " before a purchase."}}
      .dump();
}

std::string decompose_aspects(const json& data) {
  std::vector<std::pair<std::string, double>> rubrics;
  for (const auto& r : data.value("rubrics", json::array())) {
    rubrics.emplace_back(r.value("attribute", std::string()), r.value("weight", 1.0));
  }
  const int n_max = std::max(1, data.value("n_max", 3));
  json aspects = json::array();
  if (rubrics.empty()) return json{{"aspects", aspects}}.dump();
  std::size_t top = 0;
  for (std::size_t i = 1; i < rubrics.size(); ++i) {
    if (rubrics[i].second > rubrics[top].second) top = i;
  }
  std::vector<std::string> order{rubrics[top].first};
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < rubrics.size(); ++i) {
    if (i != top) rest.push_back(rubrics[i].first);
  }
  if (!rest.empty()) {
    const auto shift = fnv1a64(data.value("intent", std::string())) % rest.size();
    std::rotate(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(shift), rest.end());
  }
  order.insert(order.end(), rest.begin(), rest.end());
  if (order.size() > static_cast<std::size_t>(n_max)) order.resize(static_cast<std::size_t>(n_max));
  // Emit in a rotated order so the heaviest attribute does not also win every NDCG tie.
  const auto lead = fnv1a64("order/" + data.value("intent", std::string())) % order.size();
  std::rotate(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(lead), order.end());
  for (int i = 0; i < n_max && i < static_cast<int>(order.size()); ++i) {
    aspects.push_back({{"name", order[i]},
                       {"attributes", {order[i]}},
                       {"rationale", "Candidates differ noticeably on " + order[i] + "."}});
  }
  return json{{"aspects", aspects}}.dump();
}

std::string score_attributes(const json& data) {
  const json item = data.value("item", json::object());
  const json attrs = item.value("attributes", json::object());
  const auto id = item.value("item_id", std::string());
  json scores = json::object();
  for (const auto& a : data.value("aspect", json::object()).value("attributes", json::array())) {
    const auto name = a.get<std::string>();
    int s = static_cast<int>(1 + fnv1a64(id + "/" + name) % 5);
    if (attrs.contains(name)) {
      if (auto v = as_number(attrs[name])) s = static_cast<int>(1 + std::lround(4.0 * std::clamp(*v, 0.0, 1.0)));
    }
    scores[name] = s;
  }
  return json{{"scores", scores}}.dump();
}

std::string rationales(const json& data) {
  json out = json::object();
  for (const auto& item : data.value("items", json::array())) {
    const auto id = item.value("item_id", std::string());
    std::vector<std::string> parts;
    const json scores = item.value("attribute_scores", json::object());
    for (const auto& [attr, v] : scores.items()) {
      parts.push_back(attr + " " + v.dump() + "/5");
    }
    out[id] = "Placed by its attribute match (" + (parts.empty() ? "no scores" : join(parts, ", ")) +
              ") along the simulated path.";
  }
  return json{{"rationales", out}}.dump();
}

std::string narrative(const json& data) {
  std::vector<std::string> parts;
  for (const auto& s : data.value("steps", json::array())) {
    parts.push_back(s.value("action", std::string()) + " " + s.value("item_id", std::string()));
  }
  return json{{"narrative", "In this simulated projection the shopper would likely " +
                                (parts.empty() ? std::string("go straight to a decision")
                                               : join(parts, ", then ")) +
                                "."}}
      .dump();
}

std::string consolidate(const json& data) {
  const auto aspect = data.value("aspect", json::object());
  std::vector<std::string> attrs;
  for (const auto& a : aspect.value("attributes", json::array())) attrs.push_back(a.get<std::string>());
  const auto bought = ids_of(data.value("purchased", json::array()));
  return json{{"entries",
               {{{"condition", "choosing between similar candidates on " + join(attrs, " and ")},
                 {"content", "Rank by " + join(attrs, " and ") + " first; the purchase went to " +
                                 join(bought, ", ") + "."}}}}}
      .dump();
}

std::string mine(const json& data) {
  const auto ids = ids_of(data.value("steps", json::array()));
  return json{{"entries",
               {{{"condition", "browsing items such as " + join(ids, ", ")},
                 {"content", "These items were looked at and abandoned; do not lead with them."}}}}}
      .dump();
}

std::string judge(const json& data) {
  const json report = data.value("report", json::object());
  const json context = data.value("context", json::object());
  std::set<std::string> truth;
  for (const auto& id : ids_of(context.value("ground_truth", json::array()))) truth.insert(id);
  const auto overall = ids_of(report.value("overall", json::array()));
  const json aspects = report.value("aspects", json::array());

  int accuracy = 1;
  if (!overall.empty() && truth.count(overall.front())) {
    accuracy = 5;
  } else {
    bool secondary = std::any_of(overall.begin(), overall.end(),
                                 [&](const std::string& id) { return truth.count(id) > 0; });
    for (const auto& a : aspects) {
      const auto ids = ids_of(a.value("items", json::array()));
      if (!ids.empty() && truth.count(ids.front())) secondary = true;
    }
    if (secondary) accuracy = 3;
  }
  std::set<std::string> attrs;
  bool all_rationales = !overall.empty();
  for (const auto& a : aspects) {
    for (const auto& x : a.value("attributes", json::array())) attrs.insert(x.get<std::string>());
  }
  for (const auto& i : report.value("overall", json::array())) {
    if (i.value("rationale", std::string()).empty()) all_rationales = false;
  }
  const auto steps = report.value("trajectory", json::object()).value("steps", json::array());
  const int coverage = 1 + std::min<int>(4, static_cast<int>(attrs.size()));
  const int informativeness = all_rationales ? 4 : 2;
  const int clarity = !overall.empty() && !aspects.empty() ? 5 : 3;
  const int consistency = steps.empty() ? 3 : 4;
  const int novelty = 1 + std::min<int>(4, static_cast<int>(aspects.size()));
  return json{{"accuracy", accuracy}, {"coverage", coverage},       {"informativeness", informativeness},
              {"clarity", clarity},   {"consistency", consistency}, {"novelty", novelty}}
      .dump();
}

}  // namespace

MockProvider::MockProvider(std::uint64_t seed, int embedding_dim) : seed_(seed), dim_(embedding_dim) {
  if (dim_ < 1) throw PreconditionError("mock provider: embedding_dim must be >= 1");
}

ChatResponse MockProvider::chat(const std::string& system_prompt, const std::string& user_prompt) {
  const auto hash = prompt_hash(system_prompt, user_prompt);
  const std::string task = task_tag(user_prompt).value_or("");
  Handler handler;
  {
    std::lock_guard lock(mutex_);
    calls_.push_back({task, hash});
    if (auto f = failures_.find(task); f != failures_.end() && f->second > 0) {
      --f->second;
      throw ProviderError("mock provider: injected failure for task '" + task + "'");
    }
    if (auto s = scripted_.find(hash); s != scripted_.end()) return {s->second, {}, 0};
    if (auto q = queued_.find(task); q != queued_.end() && !q->second.empty()) {
      ChatResponse r{q->second.front(), {}, 0};
      q->second.pop_front();
      return r;
    }
    if (auto h = handlers_.find(task); h != handlers_.end()) handler = h->second;
  }
  const auto data = data_block(user_prompt).value_or(json::object());
  ChatResponse r;
  r.text = handler ? handler(data, user_prompt) : respond(task, data, user_prompt);
  r.usage.prompt_tokens = static_cast<int>((system_prompt.size() + user_prompt.size()) / 4);
  r.usage.completion_tokens = static_cast<int>(r.text.size() / 4);
  return r;
}

std::string MockProvider::respond(const std::string& task, const json& data,
                                  const std::string&) const {
  if (task == "summarize_intent") return summarize_intent(data);
  if (task == "decompose_aspects") return decompose_aspects(data);
  if (task == "score_attributes") return score_attributes(data);
  if (task == "overall_rationales" || task == "aspect_rationales") return rationales(data);
  if (task == "trajectory_narrative") return narrative(data);
  if (task == "consolidate_experience") return consolidate(data);
  if (task == "mine_low_level") return mine(data);
  if (task == "judge_report") return judge(data);
  if (task == "pairwise") return json{{"winner", 1}}.dump();
  return "OK";
}

std::vector<double> MockProvider::embed(const std::string& text) {
  if (text.empty()) throw PreconditionError("embed: text must be nonempty");
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  auto add = [&](std::string_view token) {
    std::mt19937_64 rng(mix64(fnv1a64(token) ^ mix64(seed_)));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& x : v) x += normal(rng);
  };
  bool any = false;
  for (const auto& tok : split(text, ' ')) {
    const auto t = trim(tok);
    if (t.empty()) continue;
    add(t);
    any = true;
  }
  if (!any) add(text);
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

void MockProvider::script(std::uint64_t hash, std::string response) {
  std::lock_guard lock(mutex_);
  scripted_[hash] = std::move(response);
}

void MockProvider::enqueue(const std::string& task, std::string response) {
  std::lock_guard lock(mutex_);
  queued_[task].push_back(std::move(response));
}

void MockProvider::set_handler(const std::string& task, Handler handler) {
  std::lock_guard lock(mutex_);
  handlers_[task] = std::move(handler);
}

void MockProvider::fail_next(const std::string& task, int count) {
  std::lock_guard lock(mutex_);
  failures_[task] += count;
}

std::vector<MockProvider::Call> MockProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockProvider::call_count(const std::string& task) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(calls_.begin(), calls_.end(),
                                                [&](const Call& c) { return c.task == task; }));
}

}  // namespace recpilot::llm
