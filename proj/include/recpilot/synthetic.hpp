#pragma once

// Seeded Markov-user world used as a ground-truth substrate for end-to-end
// checks. Items come in clusters; each user explores mostly inside a home
// cluster and buys the explored item that scores highest on a planted
// attribute.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "recpilot/catalog.hpp"
#include "recpilot/ingest.hpp"

namespace recpilot::synthetic {

struct WorldConfig {
  int n_users = 50;
  int n_items = 40;
  int n_attributes = 4;
  int cluster_size = 4;
  int sessions_per_user = 5;
  int min_steps = 2;  // exploration steps before the purchase
  int max_steps = 5;
  double in_cluster = 0.85;      // kernel mass kept inside the current cluster
  double planted_purchase = 0.8;  // chance the purchase follows the planted attribute
  double abandon = 0.0;           // chance a session ends without a purchase
  std::uint64_t seed = 0;
  std::int64_t start_timestamp = 1'700'000'000;

  void validate() const;
};

struct SyntheticUser {
  std::string user_id;
  int home_cluster = 0;
  int planted_attribute = 0;
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<std::string> attribute_names;
  std::vector<std::vector<double>> attributes;  // item x attribute, values in [0, 1]
  std::vector<std::vector<double>> kernel;      // item x item, rows sum to 1
  std::vector<std::vector<double>> start;       // cluster x item, rows sum to 1
  // Exploration action probabilities (click, collect, cart).
  std::vector<double> action_probs = {0.6, 0.25, 0.15};
  std::vector<SyntheticUser> users;

  int n_items() const { return static_cast<int>(attributes.size()); }
  int cluster_of(int item) const;
  static std::string item_id(int item);

  /// One session: exploration walk then (unless abandoned) a purchase of an
  /// explored item.
  ingest::Session sample_session(const SyntheticUser& user, std::int64_t day,
                                 std::mt19937_64& rng) const;

  /// Every user's sessions on consecutive days, as raw interactions.
  std::vector<ingest::InteractionRecord> interactions() const;
  catalog::ItemCatalog item_catalog() const;
  catalog::AttributeCatalog attribute_catalog() const;
};

SyntheticWorld generate_synthetic_world(const WorldConfig& config);

/// Index of the explored item with the highest value on `attribute` (first
/// occurrence on ties).
int planted_choice(const SyntheticWorld& world, const std::vector<int>& explored, int attribute);

}  // namespace recpilot::synthetic
