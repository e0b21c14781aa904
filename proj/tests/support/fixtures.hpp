#pragma once

// Helpers shared by the unit and acceptance suites: in-memory synthetic
// datasets, trained policies and an independent reference forward pass.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "recpilot/ingest.hpp"
#include "recpilot/pipeline.hpp"
#include "recpilot/policy.hpp"
#include "recpilot/synthetic.hpp"
#include "recpilot/tokenizer.hpp"

namespace recpilot::testing {

struct SyntheticData {
  synthetic::SyntheticWorld world;
  std::vector<ingest::Session> sessions;
  ingest::DatasetSplit split;
  ingest::Vocabulary vocab;
  policy::TrainingBatch train;
  policy::TrainingBatch test;
};

/// 100 users x 5 daily sessions over 2-item clusters.
inline synthetic::WorldConfig acceptance_world(std::uint64_t seed) {
  synthetic::WorldConfig c;
  c.n_users = 100;
  c.sessions_per_user = 5;
  c.n_items = 200;
  c.cluster_size = 2;
  c.in_cluster = 0.9;
  c.seed = seed;
  return c;
}

inline SyntheticData make_data(const synthetic::WorldConfig& config, std::size_t min_count = 5) {
  SyntheticData d;
  d.world = synthetic::generate_synthetic_world(config);
  d.sessions = ingest::segment_sessions(d.world.interactions());
  d.split = ingest::filter_split(ingest::split_leave_one_out(d.sessions), min_count);
  d.vocab = ingest::build_vocabulary(d.split);
  d.train = pipeline::training_pairs(d.split.train, d.vocab, 0);
  d.test = pipeline::training_pairs(d.split.test, d.vocab, 0);
  return d;
}

inline policy::SequencePolicy train_sl(const SyntheticData& d, int dim, double lr, int steps,
                                       std::uint64_t seed) {
  auto p = policy::init_policy(d.vocab, dim, seed);
  for (int s = 0; s < steps; ++s) policy::sl_train_step(p, d.train, lr);
  return p;
}

/// Plain-loop reimplementation of the reference decoder, kept separate from
/// the Eigen code paths under test.
struct NaiveForward {
  const policy::SequencePolicy& p;

  std::vector<double> state(const std::vector<Token>& hist, const std::vector<Token>& prefix) const {
    const int d = p.dim();
    std::vector<double> mh(d, 0.0), s(d, 0.0);
    for (Token t : hist) {
      for (int j = 0; j < d; ++j) mh[j] += p.embeddings()(t, j) / static_cast<double>(hist.size());
    }
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) s[i] += p.projection()(i, j) * mh[j];
    }
    for (Token t : prefix) {
      for (int j = 0; j < d; ++j) s[j] += p.embeddings()(t, j) / static_cast<double>(prefix.size());
    }
    return s;
  }

  std::vector<double> log_probs(const std::vector<Token>& hist, const std::vector<Token>& prefix) const {
    const auto s = state(hist, prefix);
    const auto V = p.vocab_size();
    std::vector<double> logits(V);
    double mx = -1e300;
    for (std::size_t v = 0; v < V; ++v) {
      double z = p.bias()(static_cast<Eigen::Index>(v));
      for (int j = 0; j < p.dim(); ++j) z += p.embeddings()(static_cast<Eigen::Index>(v), j) * s[j];
      logits[v] = z;
      mx = std::max(mx, z);
    }
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    for (auto& z : logits) z -= lse;
    return logits;
  }

  /// log P(traj[1:] | hist, <bos>).
  double trajectory_ll(const std::vector<Token>& hist, const std::vector<Token>& traj) const {
    double ll = 0.0;
    std::vector<Token> prefix{traj.front()};
    for (std::size_t i = 1; i < traj.size(); ++i) {
      ll += log_probs(hist, prefix)[static_cast<std::size_t>(traj[i])];
      prefix.push_back(traj[i]);
    }
    return ll;
  }
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("recpilot-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace recpilot::testing
