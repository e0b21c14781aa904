#include "recpilot/config.hpp"

#include <filesystem>
#include <set>

namespace recpilot::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + obj.at(key).dump() + ")");
  }
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  return doc.contains(key) ? doc.at(key) : empty;
}

}  // namespace

void RunConfig::validate() const {
  try {
    sampler.validate();
    grpo.validate();
    providers.generator.validate();
    providers.embedder.validate();
    providers.judge.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  if (policy.dim < 2) throw ConfigError("policy.dim must be >= 2");
  if (policy.sl_steps < 0) throw ConfigError("policy.sl_steps must be >= 0");
  if (!(policy.sl_lr > 0.0)) throw ConfigError("policy.sl_lr must be > 0");
  if (!(policy.clip_norm > 0.0)) throw ConfigError("policy.clip_norm must be > 0");
  if (data.min_count < 1) throw ConfigError("data.min_count must be >= 1");
  if (preference.delta < 0.0) throw ConfigError("preference.delta must be >= 0");
  if (preference.n_max < 1) throw ConfigError("preference.n_max must be >= 1");
  if (preference.experience_m < 1) throw ConfigError("preference.experience_m must be >= 1");
  if (preference.ndcg_k < 1) throw ConfigError("preference.ndcg_k must be >= 1");
  if (eval.k.empty()) throw ConfigError("eval.k must list at least one cutoff");
  for (int k : eval.k) {
    if (k < 1) throw ConfigError("eval.k entries must be >= 1");
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const auto path = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  auto value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  const auto parts = split(path, '.');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) {
      throw ConfigError("override '" + assignment + "': '" + parts[i - 1] + "' is not an object");
    }
    if (i + 1 == parts.size()) {
      (*node)[parts[i]] = value;
    } else {
      if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    }
  }
}

RunConfig config_from_json(const json& doc) {
  only_keys(doc, "config",
            {"seed", "runs_root", "data", "policy", "sampler", "grpo", "providers", "preference",
             "eval"});
  RunConfig c;
  read(doc, "seed", c.seed, "config");
  read(doc, "runs_root", c.runs_root, "config");

  const auto& d = section(doc, "data");
  only_keys(d, "data", {"interactions", "catalog", "header", "min_count", "max_history_sessions"});
  read(d, "interactions", c.data.interactions, "data");
  read(d, "catalog", c.data.catalog, "data");
  read(d, "header", c.data.header, "data");
  read(d, "min_count", c.data.min_count, "data");
  read(d, "max_history_sessions", c.data.max_history_sessions, "data");

  const auto& p = section(doc, "policy");
  only_keys(p, "policy", {"dim", "sl_steps", "sl_lr", "clip_norm"});
  read(p, "dim", c.policy.dim, "policy");
  read(p, "sl_steps", c.policy.sl_steps, "policy");
  read(p, "sl_lr", c.policy.sl_lr, "policy");
  read(p, "clip_norm", c.policy.clip_norm, "policy");

  const auto& s = section(doc, "sampler");
  only_keys(s, "sampler", {"p", "tau", "num_trajectories", "top_k", "max_len", "length_normalize"});
  read(s, "p", c.sampler.p, "sampler");
  read(s, "tau", c.sampler.tau, "sampler");
  read(s, "num_trajectories", c.sampler.num_trajectories, "sampler");
  read(s, "top_k", c.sampler.top_k, "sampler");
  read(s, "max_len", c.sampler.max_len, "sampler");
  read(s, "length_normalize", c.sampler.length_normalize, "sampler");
  c.sampler.seed = c.seed;

  const auto& g = section(doc, "grpo");
  only_keys(g, "grpo",
            {"group_size", "clip_epsilon", "kl_beta", "mu_length", "lr", "clip_norm", "steps",
             "rollouts_per_step", "ref_refresh_every", "p", "tau", "max_len"});
  read(g, "group_size", c.grpo.group_size, "grpo");
  read(g, "clip_epsilon", c.grpo.clip_epsilon, "grpo");
  read(g, "kl_beta", c.grpo.kl_beta, "grpo");
  read(g, "mu_length", c.grpo.mu_length, "grpo");
  read(g, "lr", c.grpo.lr, "grpo");
  read(g, "clip_norm", c.grpo.clip_norm, "grpo");
  read(g, "steps", c.grpo.steps, "grpo");
  read(g, "rollouts_per_step", c.grpo.rollouts_per_step, "grpo");
  read(g, "ref_refresh_every", c.grpo.ref_refresh_every, "grpo");
  read(g, "p", c.grpo.p, "grpo");
  read(g, "tau", c.grpo.tau, "grpo");
  read(g, "max_len", c.grpo.max_len, "grpo");

  const auto& pr = section(doc, "providers");
  only_keys(pr, "providers", {"generator", "embedder", "judge"});
  auto role = [&](const char* name, llm::ProviderConfig& out) {
    json r = pr.contains(name) ? pr.at(name) : json::object();
    if (!r.is_object()) throw ConfigError(std::string("providers.") + name + ": expected an object");
    if (!r.contains("seed")) r["seed"] = c.seed;
    try {
      out = llm::provider_config_from_json(r);
    } catch (const Error& e) {
      throw ConfigError(std::string("providers.") + name + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("providers.") + name + ": " + e.what());
    }
  };
  role("generator", c.providers.generator);
  role("embedder", c.providers.embedder);
  role("judge", c.providers.judge);

  const auto& pf = section(doc, "preference");
  only_keys(pf, "preference", {"delta", "n_max", "experience_m", "ndcg_k"});
  read(pf, "delta", c.preference.delta, "preference");
  read(pf, "n_max", c.preference.n_max, "preference");
  read(pf, "experience_m", c.preference.experience_m, "preference");
  read(pf, "ndcg_k", c.preference.ndcg_k, "preference");

  const auto& e = section(doc, "eval");
  only_keys(e, "eval", {"k", "judge_reports"});
  read(e, "k", c.eval.k, "eval");
  read(e, "judge_reports", c.eval.judge_reports, "eval");

  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"runs_root", c.runs_root},
          {"data",
           {{"interactions", c.data.interactions},
            {"catalog", c.data.catalog},
            {"header", c.data.header},
            {"min_count", c.data.min_count},
            {"max_history_sessions", c.data.max_history_sessions}}},
          {"policy",
           {{"dim", c.policy.dim},
            {"sl_steps", c.policy.sl_steps},
            {"sl_lr", c.policy.sl_lr},
            {"clip_norm", c.policy.clip_norm}}},
          {"sampler",
           {{"p", c.sampler.p},
            {"tau", c.sampler.tau},
            {"num_trajectories", c.sampler.num_trajectories},
            {"top_k", c.sampler.top_k},
            {"max_len", c.sampler.max_len},
            {"length_normalize", c.sampler.length_normalize}}},
          {"grpo",
           {{"group_size", c.grpo.group_size},
            {"clip_epsilon", c.grpo.clip_epsilon},
            {"kl_beta", c.grpo.kl_beta},
            {"mu_length", c.grpo.mu_length},
            {"lr", c.grpo.lr},
            {"clip_norm", c.grpo.clip_norm},
            {"steps", c.grpo.steps},
            {"rollouts_per_step", c.grpo.rollouts_per_step},
            {"ref_refresh_every", c.grpo.ref_refresh_every},
            {"p", c.grpo.p},
            {"tau", c.grpo.tau},
            {"max_len", c.grpo.max_len}}},
          {"providers",
           {{"generator", llm::provider_config_to_json(c.providers.generator)},
            {"embedder", llm::provider_config_to_json(c.providers.embedder)},
            {"judge", llm::provider_config_to_json(c.providers.judge)}}},
          {"preference",
           {{"delta", c.preference.delta},
            {"n_max", c.preference.n_max},
            {"experience_m", c.preference.experience_m},
            {"ndcg_k", c.preference.ndcg_k}}},
          {"eval", {{"k", c.eval.k}, {"judge_reports", c.eval.judge_reports}}}};
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config ") + path + ": " + e.what());
  }
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  for (const auto& o : overrides) apply_override(doc, o);
  auto c = config_from_json(doc);
  const auto base = fs::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.data.interactions);
  resolve(c.data.catalog);
  return c;
}

}  // namespace recpilot::config
