#include "recpilot/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace recpilot::catalog {

nlohmann::json ItemInfo::to_json() const {
  return {{"item_id", item_id}, {"title", title}, {"attributes", attributes}};
}

ItemInfo ItemInfo::from_json(const nlohmann::json& doc) {
  ItemInfo item;
  item.item_id = doc.at("item_id").get<std::string>();
  if (item.item_id.empty()) throw ParseError("catalog: empty item_id");
  item.title = doc.value("title", std::string());
  if (doc.contains("attributes")) {
    for (const auto& [name, value] : doc.at("attributes").items()) {
      item.attributes[name] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  return item;
}

void ItemCatalog::add(ItemInfo item) {
  if (auto it = index_.find(item.item_id); it != index_.end()) {
    items_[it->second] = std::move(item);
    return;
  }
  index_.emplace(item.item_id, items_.size());
  items_.push_back(std::move(item));
}

const ItemInfo* ItemCatalog::find(const std::string& item_id) const {
  const auto it = index_.find(item_id);
  return it == index_.end() ? nullptr : &items_[it->second];
}

const ItemInfo& ItemCatalog::at(const std::string& item_id) const {
  const auto* item = find(item_id);
  if (!item) throw PreconditionError("catalog: no metadata for item '" + item_id + "'");
  return *item;
}

ItemCatalog ItemCatalog::parse_jsonl(const std::string& text) {
  ItemCatalog cat;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    try {
      cat.add(ItemInfo::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("catalog line " + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError("catalog line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return cat;
}

ItemCatalog ItemCatalog::load(const std::string& path) { return parse_jsonl(read_file(path)); }

std::string ItemCatalog::to_jsonl() const {
  std::string out;
  for (const auto& item : items_) {
    out += item.to_json().dump();
    out += '\n';
  }
  return out;
}

AttributeCatalog::AttributeCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw PreconditionError("attribute catalog: empty attribute name");
    if (!seen.insert(n).second) {
      throw PreconditionError("attribute catalog: duplicate attribute '" + n + "'");
    }
  }
}

AttributeCatalog AttributeCatalog::from_items(const ItemCatalog& items) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& item : items.items()) {
    for (const auto& [name, value] : item.attributes) {
      if (seen.insert(name).second) names.push_back(name);
    }
  }
  return AttributeCatalog(std::move(names));
}

bool AttributeCatalog::contains(const std::string& name) const {
  return index_of(name).has_value();
}

std::optional<std::size_t> AttributeCatalog::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::optional<std::string> AttributeCatalog::value(const ItemInfo& item, const std::string& name) {
  const auto it = item.attributes.find(name);
  if (it == item.attributes.end()) return std::nullopt;
  return it->second;
}

std::optional<double> AttributeCatalog::numeric_value(const ItemInfo& item,
                                                      const std::string& name) {
  const auto v = value(item, name);
  if (!v) return std::nullopt;
  const auto s = trim(*v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

}  // namespace recpilot::catalog
