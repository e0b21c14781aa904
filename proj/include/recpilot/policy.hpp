#pragma once

// Reference autoregressive sequence policy.
//
// The decoder state after a prefix y_<t, given an encoded history x, is
//
//     state = P * mean(E[x]) + mean(E[y_<t])        (zero terms for empty inputs)
//     logits = E * state + b
//
// with one tied embedding table E (|V| x d), a d x d context projection P and
// an output bias b. Both the teacher-forced loss and sequence log-likelihoods
// have closed-form gradients, which the trainers below rely on.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "recpilot/ingest.hpp"
#include "recpilot/tokenizer.hpp"

namespace recpilot::policy {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using tokenizer::Trajectory;

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Same shapes as the policy parameters.
struct PolicyGradient {
  Matrix embeddings;
  Matrix projection;
  Vector bias;

  PolicyGradient() = default;
  PolicyGradient(std::size_t vocab_size, int dim);

  void set_zero();
  double norm() const;
  void scale(double factor);
  void add(const PolicyGradient& other, double weight = 1.0);
  bool all_finite() const;
};

class SequencePolicy {
 public:
  SequencePolicy() = default;
  /// All-zero parameters.
  SequencePolicy(std::size_t vocab_size, int dim, std::uint64_t seed = 0);

  std::size_t vocab_size() const { return static_cast<std::size_t>(embeddings_.rows()); }
  int dim() const { return static_cast<int>(embeddings_.cols()); }
  std::uint64_t seed() const { return seed_; }

  Matrix& embeddings() { return embeddings_; }
  const Matrix& embeddings() const { return embeddings_; }
  Matrix& projection() { return projection_; }
  const Matrix& projection() const { return projection_; }
  Vector& bias() { return bias_; }
  const Vector& bias() const { return bias_; }

  /// P * mean(E[history]).
  Vector history_context(std::span<const Token> history) const;
  Vector state(std::span<const Token> history, std::span<const Token> prefix) const;
  Vector next_token_logits(std::span<const Token> history, std::span<const Token> prefix) const;
  Vector logits_from_state(const Vector& state) const;

  /// Sum over continuation tokens of log P(token | history, prefix + earlier
  /// continuation tokens). When `grad` is set, adds weight * d(sum)/d(params).
  double log_likelihood(std::span<const Token> history, std::span<const Token> prefix,
                        std::span<const Token> continuation, PolicyGradient* grad = nullptr,
                        double weight = 1.0) const;

  /// params += factor * step
  void apply(const PolicyGradient& step, double factor);
  bool all_finite() const;
  void check_tokens(std::span<const Token> tokens) const;

  bool operator==(const SequencePolicy& other) const;

 private:
  Matrix embeddings_;
  Matrix projection_;
  Vector bias_;
  std::uint64_t seed_ = 0;
};

/// Embeddings ~ N(0, 1/d) entrywise, projection ~ N(0, 1/d), zero bias.
/// Values are rounded to float32 so checkpoints round-trip exactly.
SequencePolicy init_policy(const ingest::Vocabulary& vocab, int dim, std::uint64_t seed);
SequencePolicy init_policy(std::size_t vocab_size, int dim, std::uint64_t seed);

Vector next_token_logits(const SequencePolicy& policy, std::span<const Token> history,
                         std::span<const Token> prefix);

/// Sum of log-softmax scores of every target token, starting from an empty prefix.
double sequence_log_likelihood(const SequencePolicy& policy, std::span<const Token> history,
                               std::span<const Token> target);

/// Log-likelihood of a <bos>-led trajectory with <bos> taken as given.
double trajectory_log_likelihood(const SequencePolicy& policy, std::span<const Token> history,
                                 std::span<const Token> trajectory,
                                 PolicyGradient* grad = nullptr, double weight = 1.0);

/// Decoder state after consuming the whole trajectory.
Vector final_hidden_state(const SequencePolicy& policy, std::span<const Token> history,
                          std::span<const Token> trajectory);

Vector log_softmax(const Vector& logits);
Vector softmax(const Vector& logits);

struct TrainingPair {
  Trajectory history;
  Trajectory target;  // <bos> ... <eos>, format-valid
};
using TrainingBatch = std::vector<TrainingPair>;

/// Mean per-token teacher-forced negative log-likelihood over all target
/// tokens after <bos>. When `grad` is set, it receives d(loss)/d(params).
double sl_loss(const SequencePolicy& policy, std::span<const TrainingPair> batch,
               PolicyGradient* grad = nullptr);

/// Rescales `grad` in place so its norm is at most max_norm; returns the
/// pre-clip norm.
double clip_gradient(PolicyGradient& grad, double max_norm);

inline constexpr double kDefaultClipNorm = 5.0;

/// One clipped gradient-descent step on the mean teacher-forced loss.
/// Returns the loss before the update. Throws DivergenceError (leaving the
/// policy untouched) when the loss or gradient is not finite.
double sl_train_step(SequencePolicy& policy, std::span<const TrainingPair> batch, double lr,
                     double clip_norm = kDefaultClipNorm);

/// Checkpoint layout: one JSON header line
///   {"format":"recpilot-policy","version":1,"dim":d,"vocab_size":V,"seed":s}
/// followed by little-endian float32 values of E (row-major), P (row-major), b.
std::string serialize_policy(const SequencePolicy& policy);
SequencePolicy deserialize_policy(const std::string& bytes);
void save_checkpoint(const SequencePolicy& policy, const std::string& path);
/// Validates the stored vocabulary size against `vocab`.
SequencePolicy load_checkpoint(const std::string& path, const ingest::Vocabulary& vocab);

}  // namespace recpilot::policy
