#include "recpilot/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <sstream>

#include "recpilot/detail/parallel.hpp"
#include "recpilot/metrics.hpp"
#include "recpilot/rl.hpp"

namespace recpilot::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using tokenizer::Trajectory;

namespace {

std::string path_in(const Run& run, std::initializer_list<std::string_view> parts) {
  fs::path p(run.dir);
  for (auto part : parts) p /= std::string(part);
  return p.string();
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file(path, text);
}

json read_json(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing " + path);
  auto doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw ParseError("invalid JSON in " + path, 0);
  return doc;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string candidates_path(const Run& run, const std::string& user) {
  return path_in(run, {"simulate", "candidates", file_stem(user) + ".json"});
}

std::string report_path(const Run& run, const std::string& user, const char* ext) {
  return path_in(run, {"reports", file_stem(user) + ext});
}

Trajectory history_tokens(const ingest::Example& ex, const ingest::Vocabulary& vocab,
                          std::size_t max_sessions) {
  return tokenizer::tokenize_history(ex.history, vocab, max_sessions);
}

struct Analysis {
  ranking::IntentSummary intent;
  ranking::RankingResult ranked;
};

Analysis analyze(const ranking::RankingContext& ctx, const preference::PreferenceState& state,
                 const catalog::AttributeCatalog& attributes, llm::Provider& provider,
                 const AgentOptions& opts) {
  Analysis a;
  a.intent = ranking::summarize_intent(ctx, provider);
  const auto experience = preference::retrieve_experience(state, a.intent.embedding, opts.experience_m);
  auto aspects = ranking::decompose_aspects(a.intent, experience, state.rubrics, attributes,
                                            provider, opts.n_max);
  a.ranked = ranking::rank_candidates(ctx, a.intent, std::move(aspects), state.rubrics, opts.delta,
                                      provider, opts.jobs);
  return a;
}

std::set<std::string> purchased_set(const ingest::Session& s) {
  const auto items = s.purchased_items();
  return {items.begin(), items.end()};
}

// Test examples in split order, one per user.
const std::vector<ingest::Example>& test_examples(const Dataset& data) {
  if (data.split.test.empty()) throw Error("the dataset has no test users");
  return data.split.test;
}

catalog::AttributeCatalog require_attributes(const Dataset& data) {
  auto attrs = catalog::AttributeCatalog::from_items(data.items);
  if (attrs.empty()) {
    throw Error("item catalog with attributes is required (set data.catalog and rerun ingest)");
  }
  return attrs;
}

}  // namespace

std::string default_run_dir(const config::RunConfig& config) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  return (fs::path(config.runs_root) / (std::string(stamp) + "_seed" + std::to_string(config.seed)))
      .string();
}

void prepare_run_dir(const Run& run) {
  fs::create_directories(run.dir);
  write_file(path_in(run, {"config.json"}), config::config_to_json(run.config).dump(2) + "\n");
}

Providers make_providers(const config::ProviderRoles& roles) {
  std::shared_ptr<llm::Provider> generator = llm::make_provider(roles.generator);
  std::shared_ptr<llm::Provider> embedder = llm::make_provider(roles.embedder);
  return {std::make_shared<RoutedProvider>(generator, embedder), llm::make_provider(roles.judge)};
}

Dataset load_dataset(const std::string& run_dir) {
  const fs::path d = fs::path(run_dir) / "dataset";
  Dataset data;
  try {
    data.vocab = ingest::Vocabulary::from_json(read_json((d / "vocab.json").string()));
    data.split = ingest::split_from_json(read_json((d / "split.json").string()));
  } catch (const IoError&) {
    throw Error("dataset not found under " + d.string() + "; run ingest first");
  }
  if (fs::exists(d / "catalog.jsonl")) data.items = catalog::ItemCatalog::load((d / "catalog.jsonl").string());
  return data;
}

policy::TrainingBatch training_pairs(std::span<const ingest::Example> examples,
                                     const ingest::Vocabulary& vocab,
                                     std::size_t max_history_sessions) {
  policy::TrainingBatch batch;
  for (const auto& ex : examples) {
    auto target = tokenizer::tokenize_session(ex.target, vocab);
    if (!tokenizer::validate_format(target).ok()) continue;
    batch.push_back({history_tokens(ex, vocab, max_history_sessions), std::move(target)});
  }
  return batch;
}

policy::SequencePolicy load_latest_policy(const std::string& run_dir, const ingest::Vocabulary& vocab) {
  const fs::path c = fs::path(run_dir) / "checkpoints";
  if (fs::exists(c / "rl.ckpt")) return policy::load_checkpoint((c / "rl.ckpt").string(), vocab);
  if (fs::exists(c / "sl.ckpt")) return policy::load_checkpoint((c / "sl.ckpt").string(), vocab);
  throw Error("no checkpoint under " + c.string() + "; run train-sl first");
}

AgentOptions agent_options(const config::RunConfig& config, std::size_t jobs) {
  AgentOptions o;
  o.delta = config.preference.delta;
  o.n_max = config.preference.n_max;
  o.experience_m = config.preference.experience_m;
  o.ndcg_k = config.preference.ndcg_k;
  o.jobs = std::max<std::size_t>(1, jobs);
  return o;
}

ReportArtifacts build_report(const decode::CandidateSet& candidates,
                             const preference::PreferenceState& state,
                             const ingest::Vocabulary& vocab, const catalog::ItemCatalog& items,
                             const catalog::AttributeCatalog& attributes, llm::Provider& provider,
                             const AgentOptions& options) {
  if (candidates.empty()) throw PreconditionError("build_report: empty candidate set");
  const ranking::RankingContext ctx{candidates, vocab, items, attributes};
  auto a = analyze(ctx, state, attributes, provider, options);
  auto report = ranking::assemble_report(ctx, a.intent, a.ranked, provider);
  return {std::move(a.intent), std::move(a.ranked), std::move(report)};
}

decode::CandidateSet replay_candidates(const policy::SequencePolicy& policy,
                                       std::span<const Token> history,
                                       const ingest::Session& target,
                                       const ingest::Vocabulary& vocab,
                                       const decode::SamplerConfig& sampler, std::uint64_t seed) {
  auto set = decode::build_candidate_set(policy, history, sampler, seed);
  std::set<Token> present;
  for (const auto& c : set.candidates) present.insert(c.item);
  for (const auto& step : target.steps) {
    const auto token = vocab.find_item(step.item_id);
    if (!token || present.count(*token)) continue;
    present.insert(*token);
    Trajectory traj{ingest::Vocabulary::kBos, ingest::Vocabulary::kPurchase, *token};
    double score = policy::trajectory_log_likelihood(policy, history, traj);
    if (sampler.length_normalize) score /= static_cast<double>(traj.size() - 1);
    set.candidates.push_back({*token, score, std::move(traj)});
  }
  std::stable_sort(set.candidates.begin(), set.candidates.end(),
                   [](const decode::Candidate& a, const decode::Candidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.item < b.item;
                   });
  return set;
}

SessionOutcome evolve_session(preference::PreferenceState& state, const policy::SequencePolicy& policy,
                              std::span<const Token> history, const ingest::Session& target,
                              const ingest::Vocabulary& vocab, const catalog::ItemCatalog& items,
                              const catalog::AttributeCatalog& attributes, llm::Provider& provider,
                              const decode::SamplerConfig& sampler, const AgentOptions& options,
                              std::uint64_t seed) {
  SessionOutcome out;
  const auto purchased = purchased_set(target);
  if (purchased.empty()) {
    out.low_level = true;
    out.entries_added = preference::mine_low_level_session(state, target, items, provider);
    ++state.step;
    return out;
  }
  const auto candidates = replay_candidates(policy, history, target, vocab, sampler, seed);
  const ranking::RankingContext ctx{candidates, vocab, items, attributes};
  const auto a = analyze(ctx, state, attributes, provider, options);
  const auto baseline = item_ids(a.ranked.overall);
  out.overall_ndcg = eval::ndcg_at_k(std::span<const std::string>(baseline), purchased, options.ndcg_k);
  const auto update =
      preference::optimize_rubrics(state, a.ranked.rankings, purchased, options.delta, options.ndcg_k);
  out.winner = update.winner;
  if (update.winner) {
    out.entries_added = preference::consolidate_experience(state, a.ranked.rankings[*update.winner],
                                                           baseline, purchased, items, provider);
  }
  ++state.step;
  return out;
}

// Stages ------------------------------------------------------------------

std::string run_ingest(const Run& run) {
  const auto& d = run.config.data;
  if (d.interactions.empty()) throw config::ConfigError("data.interactions is not set");
  const auto records = ingest::load_interactions(d.interactions, {d.header});
  const auto sessions = ingest::segment_sessions(records);
  const auto split = ingest::filter_split(ingest::split_leave_one_out(sessions), d.min_count);
  const auto vocab = ingest::build_vocabulary(split);
  write_text(path_in(run, {"dataset", "vocab.json"}), vocab.to_json().dump() + "\n");
  write_text(path_in(run, {"dataset", "split.json"}), ingest::split_to_json(split).dump() + "\n");
  std::size_t catalog_items = 0;
  if (!d.catalog.empty()) {
    const auto items = catalog::ItemCatalog::load(d.catalog);
    catalog_items = items.size();
    write_text(path_in(run, {"dataset", "catalog.jsonl"}), items.to_jsonl());
  }
  std::ostringstream msg;
  msg << records.size() << " records, " << sessions.size() << " sessions -> " << split.train.size()
      << " train / " << split.valid.size() << " valid / " << split.test.size() << " test examples, "
      << vocab.item_count() << " items";
  if (catalog_items) msg << ", " << catalog_items << " catalog entries";
  return msg.str();
}

std::string run_train_sl(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto pairs = training_pairs(data.split.train, data.vocab, run.config.data.max_history_sessions);
  if (pairs.empty()) throw Error("no format-valid training targets");
  const auto& pc = run.config.policy;
  auto policy = policy::init_policy(data.vocab, pc.dim, derive_seed(run.config.seed, "init"));
  std::string log;
  double first = 0.0;
  for (int step = 0; step < pc.sl_steps; ++step) {
    const double loss = policy::sl_train_step(policy, pairs, pc.sl_lr, pc.clip_norm);
    if (step == 0) first = loss;
    log += json{{"step", step}, {"loss", loss}}.dump() + "\n";
  }
  const double last = policy::sl_loss(policy, pairs);
  if (pc.sl_steps == 0) first = last;
  log += json{{"step", pc.sl_steps}, {"loss", last}}.dump() + "\n";
  write_text(path_in(run, {"logs", "sl.jsonl"}), log);
  ensure_parent(path_in(run, {"checkpoints", "sl.ckpt"}));
  policy::save_checkpoint(policy, path_in(run, {"checkpoints", "sl.ckpt"}));
  return std::to_string(pairs.size()) + " pairs, loss " + fixed(first, 4) + " -> " + fixed(last, 4) +
         " after " + std::to_string(pc.sl_steps) + " steps";
}

std::string run_train_rl(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto sl_path = path_in(run, {"checkpoints", "sl.ckpt"});
  if (!fs::exists(sl_path)) throw Error("missing " + sl_path + "; run train-sl first");
  auto policy = policy::load_checkpoint(sl_path, data.vocab);
  const auto prompts = training_pairs(data.split.train, data.vocab, run.config.data.max_history_sessions);
  if (prompts.empty()) throw Error("no format-valid training targets");
  std::string log;
  rl::TrainOptions opts;
  opts.seed = derive_seed(run.config.seed, "grpo");
  opts.jobs = run.jobs;
  opts.on_step = [&](const rl::StepLog& s) { log += s.to_json().dump() + "\n"; };
  const auto steps = rl::train_grpo(policy, prompts, run.config.grpo, opts);
  write_text(path_in(run, {"logs", "rl.jsonl"}), log);
  policy::save_checkpoint(policy, path_in(run, {"checkpoints", "rl.ckpt"}));
  if (steps.empty()) return "0 steps";
  return std::to_string(steps.size()) + " steps, mean reward " + fixed(steps.front().mean_reward, 4) +
         " -> " + fixed(steps.back().mean_reward, 4);
}

std::string run_simulate(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto policy = load_latest_policy(run.dir, data.vocab);
  const auto& tests = test_examples(data);
  std::vector<json> docs(tests.size());
  parallel_for(tests.size(), run.jobs, [&](std::size_t i) {
    const auto& ex = tests[i];
    const auto history = history_tokens(ex, data.vocab, run.config.data.max_history_sessions);
    const auto set = decode::build_candidate_set(policy, history, run.config.sampler,
                                                 derive_seed(run.config.seed, "simulate:" + ex.user_id));
    docs[i] = decode::candidate_set_to_json(set, data.vocab);
  });
  for (std::size_t i = 0; i < tests.size(); ++i) {
    write_text(candidates_path(run, tests[i].user_id), docs[i].dump(2) + "\n");
  }
  return std::to_string(tests.size()) + " candidate sets written";
}

std::string run_report(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto attrs = require_attributes(data);
  const auto providers = make_providers(run.config.providers);
  const preference::PreferenceStore store(path_in(run, {"preferences"}));
  const auto opts = agent_options(run.config, run.jobs);
  std::size_t written = 0;
  for (const auto& ex : test_examples(data)) {
    const auto path = candidates_path(run, ex.user_id);
    if (!fs::exists(path)) throw Error("missing " + path + "; run simulate first");
    const auto set = decode::candidate_set_from_json(read_json(path), data.vocab);
    if (set.empty()) {
      spdlog::warn("report: empty candidate set for {}", ex.user_id);
      continue;
    }
    const auto state = store.init(ex.user_id, attrs);
    const auto art = build_report(set, state, data.vocab, data.items, attrs, *providers.agent, opts);
    write_text(report_path(run, ex.user_id, ".json"),
               ranking::render_report(art.report, ranking::ReportFormat::kJson) + "\n");
    write_text(report_path(run, ex.user_id, ".md"),
               ranking::render_report(art.report, ranking::ReportFormat::kMarkdown));
    ++written;
  }
  return std::to_string(written) + " reports written";
}

std::string run_evolve(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto attrs = require_attributes(data);
  const auto policy = load_latest_policy(run.dir, data.vocab);
  const auto providers = make_providers(run.config.providers);
  const preference::PreferenceStore store(path_in(run, {"preferences"}));
  const auto opts = agent_options(run.config, 1);

  std::vector<std::string> users;
  std::map<std::string, std::vector<const ingest::Example*>> by_user;
  for (const auto& ex : data.split.train) {
    auto& list = by_user[ex.user_id];
    if (list.empty()) users.push_back(ex.user_id);
    list.push_back(&ex);
  }
  std::vector<std::string> logs(users.size());
  std::vector<std::size_t> counts(users.size(), 0);
  // Users are independent; each one's store file is written by one worker only.
  parallel_for(users.size(), run.jobs, [&](std::size_t u) {
    const auto& user = users[u];
    auto state = store.init(user, attrs, /*overwrite=*/true);
    for (const auto* ex : by_user[user]) {
      const auto history = history_tokens(*ex, data.vocab, run.config.data.max_history_sessions);
      const int step = state.step;
      const auto out = evolve_session(state, policy, history, ex->target, data.vocab, data.items, attrs,
                                      *providers.agent, run.config.sampler, opts,
                                      derive_seed(run.config.seed, "evolve:" + user + ":" + std::to_string(step)));
      store.save(state);
      json row = json::object();
      row["user_id"] = user;
      row["step"] = step;
      row["low_level"] = out.low_level;
      row["entries_added"] = out.entries_added;
      if (!out.low_level) row["overall_ndcg"] = out.overall_ndcg;
      row["winner"] = out.winner ? json(*out.winner) : json(nullptr);
      logs[u] += row.dump() + "\n";
      ++counts[u];
    }
  });
  std::string all;
  std::size_t sessions = 0;
  for (std::size_t u = 0; u < users.size(); ++u) {
    all += logs[u];
    sessions += counts[u];
  }
  write_text(path_in(run, {"logs", "evolve.jsonl"}), all);
  return std::to_string(sessions) + " sessions replayed for " + std::to_string(users.size()) + " users";
}

std::string run_eval(const Run& run) {
  const auto data = load_dataset(run.dir);
  const auto& ks = run.config.eval.k;
  std::unique_ptr<Providers> providers;

  struct Row {
    std::string user;
    std::map<int, double> recall, ndcg, report_recall, report_ndcg;
    std::optional<eval::ReportScores> scores;
    bool has_report = false;
  };
  std::vector<Row> rows;
  for (const auto& ex : test_examples(data)) {
    const auto path = candidates_path(run, ex.user_id);
    if (!fs::exists(path)) throw Error("missing " + path + "; run simulate first");
    const auto set = decode::candidate_set_from_json(read_json(path), data.vocab);
    const auto truth = purchased_set(ex.target);
    if (truth.empty()) continue;
    std::vector<std::string> ranked;
    for (Token t : set.items()) ranked.push_back(data.vocab.symbol(t));
    Row row;
    row.user = ex.user_id;
    for (int k : ks) {
      row.recall[k] = eval::recall_at_k(std::span<const std::string>(ranked), truth, k);
      row.ndcg[k] = eval::ndcg_at_k(std::span<const std::string>(ranked), truth, k);
    }
    const auto rpath = report_path(run, ex.user_id, ".json");
    if (fs::exists(rpath)) {
      row.has_report = true;
      const auto doc = read_json(rpath);
      const auto report = ranking::report_from_json(doc);
      std::vector<std::string> overall;
      for (const auto& item : report.overall) overall.push_back(item.item_id);
      for (int k : ks) {
        row.report_recall[k] = eval::recall_at_k(std::span<const std::string>(overall), truth, k);
        row.report_ndcg[k] = eval::ndcg_at_k(std::span<const std::string>(overall), truth, k);
      }
      if (run.config.eval.judge_reports) {
        if (!providers) providers = std::make_unique<Providers>(make_providers(run.config.providers));
        eval::JudgeContext ctx;
        for (const auto& s : ex.history) ctx.history.insert(ctx.history.end(), s.steps.begin(), s.steps.end());
        ctx.trajectory = report.trajectory;
        ctx.candidates = ranked;
        ctx.ground_truth.assign(truth.begin(), truth.end());
        row.scores = eval::judge_report(doc, ctx, *providers->judge);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("no test users with a purchase to evaluate");

  auto mean_of = [&](auto field, int k, bool reports_only) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (reports_only && !r.has_report) continue;
      sum += (r.*field).at(k);
      ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  };
  json summary{{"users", rows.size()}, {"recall", json::object()}, {"ndcg", json::object()}};
  for (int k : ks) {
    summary["recall"][std::to_string(k)] = mean_of(&Row::recall, k, false);
    summary["ndcg"][std::to_string(k)] = mean_of(&Row::ndcg, k, false);
  }
  const auto reported = static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const Row& r) { return r.has_report; }));
  if (reported > 0) {
    json rr{{"users", reported}, {"recall", json::object()}, {"ndcg", json::object()}};
    for (int k : ks) {
      rr["recall"][std::to_string(k)] = mean_of(&Row::report_recall, k, true);
      rr["ndcg"][std::to_string(k)] = mean_of(&Row::report_ndcg, k, true);
    }
    summary["report_ranking"] = rr;
  }
  std::vector<const eval::ReportScores*> judged;
  for (const auto& r : rows) {
    if (r.scores) judged.push_back(&*r.scores);
  }
  if (!judged.empty()) {
    eval::ReportScores m;
    for (const auto* s : judged) {
      m.accuracy += s->accuracy;
      m.coverage += s->coverage;
      m.informativeness += s->informativeness;
      m.clarity += s->clarity;
      m.consistency += s->consistency;
      m.novelty += s->novelty;
    }
    const double n = static_cast<double>(judged.size());
    for (double* v : {&m.accuracy, &m.coverage, &m.informativeness, &m.clarity, &m.consistency, &m.novelty}) {
      *v /= n;
    }
    auto js = m.to_json();
    js["reports"] = judged.size();
    summary["report_scores"] = js;
  }
  write_text(path_in(run, {"eval", "metrics.json"}), summary.dump(2) + "\n");

  std::string csv = "user_id";
  for (int k : ks) csv += ",recall@" + std::to_string(k) + ",ndcg@" + std::to_string(k);
  for (int k : ks) csv += ",report_recall@" + std::to_string(k) + ",report_ndcg@" + std::to_string(k);
  for (const char* d : eval::kReportDimensions) csv += std::string(",") + d;
  csv += ",report_average\n";
  for (const auto& r : rows) {
    csv += r.user;
    for (int k : ks) csv += "," + fixed(r.recall.at(k)) + "," + fixed(r.ndcg.at(k));
    for (int k : ks) {
      if (r.has_report) {
        csv += "," + fixed(r.report_recall.at(k)) + "," + fixed(r.report_ndcg.at(k));
      } else {
        csv += ",,";
      }
    }
    if (r.scores) {
      for (double v : {r.scores->accuracy, r.scores->coverage, r.scores->informativeness,
                       r.scores->clarity, r.scores->consistency, r.scores->novelty}) {
        csv += "," + fixed(v, 0);
      }
      csv += "," + fixed(r.scores->average(), 4);
    } else {
      csv += ",,,,,,,";
    }
    csv += "\n";
  }
  write_text(path_in(run, {"eval", "per_user.csv"}), csv);

  std::string msg = std::to_string(rows.size()) + " users";
  for (int k : ks) msg += ", recall@" + std::to_string(k) + " " + fixed(summary["recall"][std::to_string(k)], 4);
  if (summary.contains("report_scores")) msg += ", report avg " + fixed(summary["report_scores"]["average"], 3);
  return msg;
}

}  // namespace recpilot::pipeline
