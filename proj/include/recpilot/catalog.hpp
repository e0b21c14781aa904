#pragma once

// Item metadata and the attribute vocabulary rubrics are keyed by.

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "recpilot/common.hpp"

namespace recpilot::catalog {

struct ItemInfo {
  std::string item_id;
  std::string title;
  std::map<std::string, std::string> attributes;

  nlohmann::json to_json() const;
  static ItemInfo from_json(const nlohmann::json& doc);
  bool operator==(const ItemInfo&) const = default;
};

class ItemCatalog {
 public:
  /// Replaces an existing entry with the same id.
  void add(ItemInfo item);
  const ItemInfo* find(const std::string& item_id) const;
  /// Throws PreconditionError for unknown ids.
  const ItemInfo& at(const std::string& item_id) const;
  bool contains(const std::string& item_id) const { return find(item_id) != nullptr; }
  std::size_t size() const { return items_.size(); }
  const std::vector<ItemInfo>& items() const { return items_; }

  /// One JSON object per line: {"item_id", "title", "attributes": {name: value}}.
  static ItemCatalog parse_jsonl(const std::string& text);
  static ItemCatalog load(const std::string& path);
  std::string to_jsonl() const;

 private:
  std::vector<ItemInfo> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

class AttributeCatalog {
 public:
  AttributeCatalog() = default;
  /// Names must be nonempty and unique.
  explicit AttributeCatalog(std::vector<std::string> names);
  /// Attribute names in order of first appearance across the items.
  static AttributeCatalog from_items(const ItemCatalog& items);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  bool contains(const std::string& name) const;
  std::optional<std::size_t> index_of(const std::string& name) const;

  static std::optional<std::string> value(const ItemInfo& item, const std::string& name);
  static std::optional<double> numeric_value(const ItemInfo& item, const std::string& name);

 private:
  std::vector<std::string> names_;
};

}  // namespace recpilot::catalog
