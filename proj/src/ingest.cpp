#include "recpilot/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace recpilot::ingest {

bool Session::has_purchase() const {
  return std::any_of(steps.begin(), steps.end(),
                     [](const Step& s) { return s.action == Action::kPurchase; });
}

std::vector<std::string> Session::purchased_items() const {
  std::vector<std::string> items;
  for (const auto& step : steps) {
    if (step.action == Action::kPurchase &&
        std::find(items.begin(), items.end(), step.item_id) == items.end()) {
      items.push_back(step.item_id);
    }
  }
  return items;
}

std::vector<InteractionRecord> parse_interactions(const std::string& text,
                                                  const LoadOptions& options) {
  std::vector<InteractionRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (options.skip_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const auto action = parse_action(fields[2]);
    if (!action) {
      throw ParseError("line " + std::to_string(line_no) + ": unknown action '" + fields[2] + "'",
                       line_no);
    }
    std::int64_t ts = 0;
    const auto& ts_field = fields[3];
    const auto [ptr, ec] = std::from_chars(ts_field.data(), ts_field.data() + ts_field.size(), ts);
    if (ec != std::errc() || ptr != ts_field.data() + ts_field.size() || ts < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": bad timestamp '" + ts_field + "'",
                       line_no);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty user or item id", line_no);
    }
    records.push_back({fields[0], fields[1], *action, ts});
  }
  return records;
}

std::vector<InteractionRecord> load_interactions(const std::string& path,
                                                 const LoadOptions& options) {
  return parse_interactions(read_file(path), options);
}

std::string format_interactions(const std::vector<InteractionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.user_id;
    out += '\t';
    out += r.item_id;
    out += '\t';
    out += action_name(r.action);
    out += '\t';
    out += std::to_string(r.timestamp);
    out += '\n';
  }
  return out;
}

std::int64_t utc_day(std::int64_t timestamp) {
  constexpr std::int64_t kDay = 86400;
  return timestamp >= 0 ? timestamp / kDay : -((-timestamp + kDay - 1) / kDay);
}

std::string iso_date(std::int64_t day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<Session> segment_sessions(const std::vector<InteractionRecord>& records) {
  std::unordered_map<std::string, std::size_t> user_rank;
  for (const auto& r : records) user_rank.try_emplace(r.user_id, user_rank.size());

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    const auto ua = user_rank.at(ra.user_id);
    const auto ub = user_rank.at(rb.user_id);
    if (ua != ub) return ua < ub;
    return ra.timestamp < rb.timestamp;
  });

  std::vector<Session> sessions;
  for (std::size_t idx : order) {
    const auto& r = records[idx];
    const auto day = utc_day(r.timestamp);
    if (sessions.empty() || sessions.back().user_id != r.user_id || sessions.back().day != day) {
      sessions.push_back({r.user_id, day, {}});
    }
    sessions.back().steps.push_back({r.action, r.item_id});
  }
  return sessions;
}

ItemCounts count_items(const std::vector<Session>& sessions) {
  ItemCounts counts;
  for (const auto& s : sessions) {
    for (const auto& step : s.steps) ++counts[step.item_id];
  }
  return counts;
}

namespace {

std::optional<Session> filter_session(const Session& session, const ItemCounts& counts,
                                      std::size_t min_count) {
  Session out{session.user_id, session.day, {}};
  for (const auto& step : session.steps) {
    const auto it = counts.find(step.item_id);
    if (it != counts.end() && it->second >= min_count) out.steps.push_back(step);
  }
  if (out.steps.empty()) return std::nullopt;
  return out;
}

std::vector<Session> filter_history(const std::vector<Session>& history, const ItemCounts& counts,
                                    std::size_t min_count) {
  std::vector<Session> out;
  for (const auto& s : history) {
    if (auto kept = filter_session(s, counts, min_count)) out.push_back(std::move(*kept));
  }
  return out;
}

}  // namespace

std::vector<Session> filter_rare_items(const std::vector<Session>& sessions,
                                       const ItemCounts& counts, std::size_t min_count) {
  if (min_count < 1) throw PreconditionError("filter_rare_items: min_count must be >= 1");
  return filter_history(sessions, counts, min_count);
}

std::vector<Session> filter_rare_items(const std::vector<Session>& sessions,
                                       std::size_t min_count) {
  return filter_rare_items(sessions, count_items(sessions), min_count);
}

DatasetSplit split_leave_one_out(const std::vector<Session>& sessions) {
  // Preserve order of first appearance per user; sessions of a user are
  // assumed chronological (as produced by segment_sessions).
  std::vector<std::string> users;
  std::unordered_map<std::string, std::vector<const Session*>> by_user;
  for (const auto& s : sessions) {
    auto [it, inserted] = by_user.try_emplace(s.user_id);
    if (inserted) users.push_back(s.user_id);
    it->second.push_back(&s);
  }

  DatasetSplit split;
  for (const auto& user : users) {
    const auto& timeline = by_user.at(user);
    std::vector<std::size_t> purchase_idx;
    for (std::size_t i = 0; i < timeline.size(); ++i) {
      if (timeline[i]->has_purchase()) purchase_idx.push_back(i);
    }
    auto history_before = [&](std::size_t end) {
      std::vector<Session> h;
      h.reserve(end);
      for (std::size_t i = 0; i < end; ++i) h.push_back(*timeline[i]);
      return h;
    };

    std::size_t train_end = timeline.size();
    if (!purchase_idx.empty()) {
      const std::size_t test_at = purchase_idx.back();
      split.test.push_back({user, history_before(test_at), *timeline[test_at]});
      train_end = test_at;
      if (purchase_idx.size() >= 2) {
        const std::size_t valid_at = purchase_idx[purchase_idx.size() - 2];
        split.valid.push_back({user, history_before(valid_at), *timeline[valid_at]});
        train_end = valid_at;
      }
    }
    for (std::size_t i = 0; i < train_end; ++i) {
      split.train.push_back({user, history_before(i), *timeline[i]});
    }
  }
  return split;
}

ItemCounts training_item_counts(const DatasetSplit& split) {
  ItemCounts counts;
  for (const auto& ex : split.train) {
    for (const auto& step : ex.target.steps) ++counts[step.item_id];
  }
  return counts;
}

DatasetSplit filter_split(const DatasetSplit& split, std::size_t min_count) {
  if (min_count < 1) throw PreconditionError("filter_split: min_count must be >= 1");
  const auto counts = training_item_counts(split);
  DatasetSplit out;
  for (const auto& ex : split.train) {
    auto target = filter_session(ex.target, counts, min_count);
    if (!target) continue;
    out.train.push_back({ex.user_id, filter_history(ex.history, counts, min_count), std::move(*target)});
  }
  auto filter_eval = [&](const std::vector<Example>& in, std::vector<Example>& dst) {
    for (const auto& ex : in) {
      auto target = filter_session(ex.target, counts, min_count);
      if (!target || !target->has_purchase()) continue;
      dst.push_back({ex.user_id, filter_history(ex.history, counts, min_count), std::move(*target)});
    }
  };
  filter_eval(split.valid, out.valid);
  filter_eval(split.test, out.test);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {
const std::vector<std::string> kSpecialSymbols = {"<bos>", "<eos>"};
const std::vector<std::string> kActionSymbols = {"<click>", "<collect>", "<cart>", "<purchase>"};
}  // namespace

Vocabulary::Vocabulary() {
  symbols_ = kSpecialSymbols;
  symbols_.insert(symbols_.end(), kActionSymbols.begin(), kActionSymbols.end());
}

Token Vocabulary::add_item(const std::string& item_id) {
  if (auto found = find_item(item_id)) return *found;
  const auto token = static_cast<Token>(symbols_.size());
  symbols_.push_back(item_id);
  item_index_.emplace(item_id, token);
  return token;
}

std::optional<Token> Vocabulary::find_item(const std::string& item_id) const {
  const auto it = item_index_.find(item_id);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

Token Vocabulary::item_token(const std::string& item_id) const {
  if (auto t = find_item(item_id)) return *t;
  throw PreconditionError("unknown item '" + item_id + "'");
}

const std::string& Vocabulary::symbol(Token token) const {
  if (!contains(token)) throw PreconditionError("token " + std::to_string(token) + " out of range");
  return symbols_[static_cast<std::size_t>(token)];
}

std::optional<Token> Vocabulary::token_of(const std::string& symbol) const {
  for (Token t = 0; t < kFirstItem; ++t) {
    if (symbols_[static_cast<std::size_t>(t)] == symbol) return t;
  }
  return find_item(symbol);
}

std::optional<Action> Vocabulary::action_of(Token token) {
  if (!is_action(token)) return std::nullopt;
  return static_cast<Action>(token - kClick);
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json items = nlohmann::json::object();
  for (std::size_t i = kFirstItem; i < symbols_.size(); ++i) items[symbols_[i]] = i;
  return {{"specials", kSpecialSymbols}, {"actions", kActionSymbols}, {"items", items}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  if (doc.at("specials").get<std::vector<std::string>>() != kSpecialSymbols ||
      doc.at("actions").get<std::vector<std::string>>() != kActionSymbols) {
    throw ParseError("vocabulary: unexpected specials/actions layout");
  }
  const auto& items = doc.at("items");
  std::vector<std::string> by_index(items.size());
  for (auto it = items.begin(); it != items.end(); ++it) {
    const auto index = it.value().get<std::int64_t>();
    const auto slot = index - kFirstItem;
    if (slot < 0 || slot >= static_cast<std::int64_t>(by_index.size()) ||
        !by_index[static_cast<std::size_t>(slot)].empty()) {
      throw ParseError("vocabulary: item indices are not dense");
    }
    by_index[static_cast<std::size_t>(slot)] = it.key();
  }
  Vocabulary vocab;
  for (const auto& id : by_index) vocab.add_item(id);
  return vocab;
}

Vocabulary build_vocabulary(const std::vector<Session>& sessions) {
  Vocabulary vocab;
  for (const auto& s : sessions) {
    for (const auto& step : s.steps) vocab.add_item(step.item_id);
  }
  return vocab;
}

Vocabulary build_vocabulary(const DatasetSplit& split) {
  Vocabulary vocab;
  auto add = [&](const Session& s) {
    for (const auto& step : s.steps) vocab.add_item(step.item_id);
  };
  for (const auto& ex : split.train) add(ex.target);
  for (const auto* part : {&split.valid, &split.test}) {
    for (const auto& ex : *part) {
      for (const auto& h : ex.history) add(h);
      add(ex.target);
    }
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json session_to_json(const Session& session) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : session.steps) {
    steps.push_back({{"action", std::string(action_name(s.action))}, {"item_id", s.item_id}});
  }
  return {{"user_id", session.user_id}, {"day", session.day}, {"steps", steps}};
}

Session session_from_json(const nlohmann::json& doc) {
  Session s;
  s.user_id = doc.at("user_id").get<std::string>();
  s.day = doc.at("day").get<std::int64_t>();
  for (const auto& step : doc.at("steps")) {
    const auto label = step.at("action").get<std::string>();
    const auto action = parse_action(label);
    if (!action) throw ParseError("unknown action '" + label + "'");
    s.steps.push_back({*action, step.at("item_id").get<std::string>()});
  }
  return s;
}

namespace {

nlohmann::json examples_to_json(const std::vector<Example>& examples, bool with_history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ex : examples) {
    nlohmann::json e{{"user_id", ex.user_id}, {"target", session_to_json(ex.target)}};
    if (with_history) {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& s : ex.history) h.push_back(session_to_json(s));
      e["history"] = std::move(h);
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

std::vector<Example> examples_from_json(const nlohmann::json& arr) {
  std::vector<Example> out;
  for (const auto& e : arr) {
    Example ex;
    ex.user_id = e.at("user_id").get<std::string>();
    ex.target = session_from_json(e.at("target"));
    for (const auto& h : e.at("history")) ex.history.push_back(session_from_json(h));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

// Training examples are stored without history: each training target's
// history is exactly the preceding training targets of the same user, so it is
// rebuilt on load.
nlohmann::json split_to_json(const DatasetSplit& split) {
  return {{"train", examples_to_json(split.train, false)},
          {"valid", examples_to_json(split.valid, true)},
          {"test", examples_to_json(split.test, true)}};
}

DatasetSplit split_from_json(const nlohmann::json& doc) {
  DatasetSplit split;
  std::unordered_map<std::string, std::vector<Session>> seen;
  for (const auto& e : doc.at("train")) {
    Example ex;
    ex.user_id = e.at("user_id").get<std::string>();
    ex.target = session_from_json(e.at("target"));
    auto& prior = seen[ex.user_id];
    ex.history = prior;
    prior.push_back(ex.target);
    split.train.push_back(std::move(ex));
  }
  split.valid = examples_from_json(doc.at("valid"));
  split.test = examples_from_json(doc.at("test"));
  return split;
}

}  // namespace recpilot::ingest
