#pragma once

// Raw multi-behavior logs -> daily sessions -> leave-one-out splits, plus the
// unified token vocabulary shared by every downstream stage.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "recpilot/common.hpp"

namespace recpilot::ingest {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  Action action = Action::kClick;
  std::int64_t timestamp = 0;

  bool operator==(const InteractionRecord&) const = default;
};

struct Step {
  Action action = Action::kClick;
  std::string item_id;

  bool operator==(const Step&) const = default;
};

/// One user's interactions on one UTC calendar day, time ordered.
struct Session {
  std::string user_id;
  std::int64_t day = 0;  // days since 1970-01-01 (UTC)
  std::vector<Step> steps;

  bool has_purchase() const;
  std::vector<std::string> purchased_items() const;
  bool operator==(const Session&) const = default;
};

/// A prediction example: everything the user did before `target`.
struct Example {
  std::string user_id;
  std::vector<Session> history;
  Session target;
};

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

using ItemCounts = std::unordered_map<std::string, std::size_t>;

struct LoadOptions {
  bool skip_header = false;
};

/// Parses a four-column TSV (user_id, item_id, action, timestamp).
std::vector<InteractionRecord> load_interactions(const std::string& path,
                                                 const LoadOptions& options = {});
std::vector<InteractionRecord> parse_interactions(const std::string& text,
                                                  const LoadOptions& options = {});
std::string format_interactions(const std::vector<InteractionRecord>& records);

std::int64_t utc_day(std::int64_t timestamp);
std::string iso_date(std::int64_t day);

/// Groups records by (user, UTC day). Sessions are ordered by the user's first
/// appearance in the input, then by day; steps are stable-sorted by timestamp.
std::vector<Session> segment_sessions(const std::vector<InteractionRecord>& records);

ItemCounts count_items(const std::vector<Session>& sessions);

/// Removes steps whose item occurs fewer than `min_count` times in `counts`
/// and drops sessions left empty.
std::vector<Session> filter_rare_items(const std::vector<Session>& sessions,
                                       const ItemCounts& counts, std::size_t min_count);
/// Same, counting occurrences over `sessions` themselves.
std::vector<Session> filter_rare_items(const std::vector<Session>& sessions,
                                       std::size_t min_count = 5);

/// Session-wise leave-one-out: per user the last purchase session is the test
/// target, the second-to-last the validation target; sessions before the
/// validation target (or before the test target when there is none) are
/// training material, each one a training target over its predecessors.
DatasetSplit split_leave_one_out(const std::vector<Session>& sessions);

/// Counts item occurrences over training targets only.
ItemCounts training_item_counts(const DatasetSplit& split);

/// Applies rarity filtering to every split with counts taken from training
/// material. Valid/test examples whose target loses all purchase steps are
/// dropped; emptied history sessions vanish; emptied training targets are
/// dropped.
DatasetSplit filter_split(const DatasetSplit& split, std::size_t min_count);

class Vocabulary {
 public:
  static constexpr Token kBos = 0;
  static constexpr Token kEos = 1;
  static constexpr Token kClick = 2;
  static constexpr Token kCollect = 3;
  static constexpr Token kCart = 4;
  static constexpr Token kPurchase = 5;
  static constexpr Token kFirstItem = 6;

  Vocabulary();

  Token add_item(const std::string& item_id);
  std::optional<Token> find_item(const std::string& item_id) const;
  /// Throws PreconditionError for unknown items.
  Token item_token(const std::string& item_id) const;
  const std::string& symbol(Token token) const;
  /// Inverse of symbol(); accepts specials, actions and item ids.
  std::optional<Token> token_of(const std::string& symbol) const;

  std::size_t size() const { return symbols_.size(); }
  std::size_t item_count() const { return symbols_.size() - kFirstItem; }

  bool contains(Token token) const { return token >= 0 && static_cast<std::size_t>(token) < size(); }
  static bool is_special(Token token) { return token == kBos || token == kEos; }
  static bool is_action(Token token) { return token >= kClick && token <= kPurchase; }
  static bool is_item(Token token) { return token >= kFirstItem; }
  static Token action_token(Action action) { return kClick + static_cast<Token>(action); }
  static std::optional<Action> action_of(Token token);

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, Token> item_index_;
};

/// Items are numbered in first-appearance order across `sessions`.
Vocabulary build_vocabulary(const std::vector<Session>& sessions);
Vocabulary build_vocabulary(const DatasetSplit& split);

nlohmann::json session_to_json(const Session& session);
Session session_from_json(const nlohmann::json& doc);
nlohmann::json split_to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& doc);

}  // namespace recpilot::ingest
