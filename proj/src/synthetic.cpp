#include "recpilot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace recpilot::synthetic {

namespace {

int draw(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

std::string format3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* kAttributeNames[] = {"quality", "price_appeal", "style", "durability",
                                 "brand_fit", "comfort",      "eco",   "novelty_fit"};

}  // namespace

void WorldConfig::validate() const {
  if (n_users < 2 || n_items < 2) throw PreconditionError("synthetic world: sizes must be >= 2");
  if (n_attributes < 1) throw PreconditionError("synthetic world: need at least one attribute");
  if (cluster_size < 1) throw PreconditionError("synthetic world: cluster_size must be >= 1");
  if (sessions_per_user < 1) throw PreconditionError("synthetic world: sessions_per_user >= 1");
  if (min_steps < 1 || max_steps < min_steps) {
    throw PreconditionError("synthetic world: need 1 <= min_steps <= max_steps");
  }
  for (double p : {in_cluster, planted_purchase, abandon}) {
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("synthetic world: probabilities in [0, 1]");
  }
}

int SyntheticWorld::cluster_of(int item) const { return item / config.cluster_size; }

std::string SyntheticWorld::item_id(int item) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item%04d", item);
  return buf;
}

int planted_choice(const SyntheticWorld& world, const std::vector<int>& explored, int attribute) {
  if (explored.empty()) throw PreconditionError("planted_choice: nothing explored");
  int best = explored.front();
  for (int item : explored) {
    if (world.attributes[item][attribute] > world.attributes[best][attribute]) best = item;
  }
  return best;
}

ingest::Session SyntheticWorld::sample_session(const SyntheticUser& user, std::int64_t day,
                                               std::mt19937_64& rng) const {
  ingest::Session s;
  s.user_id = user.user_id;
  s.day = day;
  const int length =
      std::uniform_int_distribution<int>(config.min_steps, config.max_steps)(rng);
  std::vector<int> explored;
  int item = draw(start[user.home_cluster], rng);
  for (int t = 0; t < length; ++t) {
    if (t > 0) item = draw(kernel[item], rng);
    const auto action = static_cast<Action>(draw(action_probs, rng));
    s.steps.push_back({action, item_id(item)});
    explored.push_back(item);
  }
  if (std::bernoulli_distribution(config.abandon)(rng)) return s;
  int bought = planted_choice(*this, explored, user.planted_attribute);
  if (!std::bernoulli_distribution(config.planted_purchase)(rng)) {
    bought = explored[std::uniform_int_distribution<std::size_t>(0, explored.size() - 1)(rng)];
  }
  s.steps.push_back({Action::kPurchase, item_id(bought)});
  return s;
}

std::vector<ingest::InteractionRecord> SyntheticWorld::interactions() const {
  std::vector<ingest::InteractionRecord> out;
  const std::int64_t first_day = ingest::utc_day(config.start_timestamp);
  for (std::size_t u = 0; u < users.size(); ++u) {
    std::mt19937_64 rng(derive_seed(config.seed, "user:" + users[u].user_id));
    for (int k = 0; k < config.sessions_per_user; ++k) {
      const std::int64_t day = first_day + k;
      const auto session = sample_session(users[u], day, rng);
      std::int64_t ts = day * 86400 + 9 * 3600 + static_cast<std::int64_t>(u % 600) * 60;
      for (const auto& step : session.steps) {
        out.push_back({users[u].user_id, step.item_id, step.action, ts});
        ts += 30;
      }
    }
  }
  return out;
}

catalog::ItemCatalog SyntheticWorld::item_catalog() const {
  catalog::ItemCatalog cat;
  for (int i = 0; i < n_items(); ++i) {
    catalog::ItemInfo info;
    info.item_id = item_id(i);
    info.title = "Item " + std::to_string(i) + " (group " + std::to_string(cluster_of(i)) + ")";
    for (std::size_t a = 0; a < attribute_names.size(); ++a) {
      info.attributes[attribute_names[a]] = format3(attributes[i][a]);
    }
    cat.add(std::move(info));
  }
  return cat;
}

catalog::AttributeCatalog SyntheticWorld::attribute_catalog() const {
  return catalog::AttributeCatalog(attribute_names);
}

SyntheticWorld generate_synthetic_world(const WorldConfig& config) {
  config.validate();
  SyntheticWorld w;
  w.config = config;
  std::mt19937_64 rng(derive_seed(config.seed, "world"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int a = 0; a < config.n_attributes; ++a) {
    w.attribute_names.push_back(a < 8 ? std::string(kAttributeNames[a])
                                      : "attribute_" + std::to_string(a));
  }
  w.attributes.assign(config.n_items, std::vector<double>(config.n_attributes));
  for (auto& row : w.attributes) {
    // Stored at catalog precision so metadata round-trips exactly.
    for (auto& v : row) v = std::round(unit(rng) * 1000.0) / 1000.0;
  }

  const int n = config.n_items;
  const int n_clusters = (n + config.cluster_size - 1) / config.cluster_size;
  w.kernel.assign(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    const int c = w.cluster_of(i);
    const int lo = c * config.cluster_size;
    const int hi = std::min(n, lo + config.cluster_size);
    const int outside = n - (hi - lo);
    const double inside_mass = outside == 0 ? 1.0 : config.in_cluster;
    std::vector<double> weights(hi - lo);
    for (auto& x : weights) x = 0.2 + unit(rng);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (int j = lo; j < hi; ++j) w.kernel[i][j] = inside_mass * weights[j - lo] / total;
    if (outside > 0) {
      for (int j = 0; j < n; ++j) {
        if (j < lo || j >= hi) w.kernel[i][j] = (1.0 - inside_mass) / outside;
      }
    }
  }
  w.start.assign(n_clusters, std::vector<double>(n, 0.0));
  for (int c = 0; c < n_clusters; ++c) {
    const int lo = c * config.cluster_size;
    const int hi = std::min(n, lo + config.cluster_size);
    double total = 0.0;
    for (int j = lo; j < hi; ++j) total += (w.start[c][j] = 0.2 + unit(rng));
    for (int j = lo; j < hi; ++j) w.start[c][j] /= total;
  }
  for (int u = 0; u < config.n_users; ++u) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "user%04d", u);
    w.users.push_back({buf, std::uniform_int_distribution<int>(0, n_clusters - 1)(rng),
                       std::uniform_int_distribution<int>(0, config.n_attributes - 1)(rng)});
  }
  return w;
}

}  // namespace recpilot::synthetic
