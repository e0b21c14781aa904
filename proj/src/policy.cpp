#include "recpilot/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

namespace recpilot::policy {

// ---------------------------------------------------------------------------
// PolicyGradient

PolicyGradient::PolicyGradient(std::size_t vocab_size, int dim)
    : embeddings(Matrix::Zero(static_cast<Eigen::Index>(vocab_size), dim)),
      projection(Matrix::Zero(dim, dim)),
      bias(Vector::Zero(static_cast<Eigen::Index>(vocab_size))) {}

void PolicyGradient::set_zero() {
  embeddings.setZero();
  projection.setZero();
  bias.setZero();
}

double PolicyGradient::norm() const {
  return std::sqrt(embeddings.squaredNorm() + projection.squaredNorm() + bias.squaredNorm());
}

void PolicyGradient::scale(double factor) {
  embeddings *= factor;
  projection *= factor;
  bias *= factor;
}

void PolicyGradient::add(const PolicyGradient& other, double weight) {
  embeddings += weight * other.embeddings;
  projection += weight * other.projection;
  bias += weight * other.bias;
}

bool PolicyGradient::all_finite() const {
  return embeddings.allFinite() && projection.allFinite() && bias.allFinite();
}

// ---------------------------------------------------------------------------
// SequencePolicy

SequencePolicy::SequencePolicy(std::size_t vocab_size, int dim, std::uint64_t seed)
    : embeddings_(Matrix::Zero(static_cast<Eigen::Index>(vocab_size), dim)),
      projection_(Matrix::Zero(dim, dim)),
      bias_(Vector::Zero(static_cast<Eigen::Index>(vocab_size))),
      seed_(seed) {}

void SequencePolicy::check_tokens(std::span<const Token> tokens) const {
  const auto v = static_cast<Token>(vocab_size());
  for (Token t : tokens) {
    if (t < 0 || t >= v) {
      throw PreconditionError("token index " + std::to_string(t) + " out of range for |V|=" +
                              std::to_string(v));
    }
  }
}

namespace {

Vector mean_embedding(const Matrix& table, std::span<const Token> tokens) {
  Vector m = Vector::Zero(table.cols());
  if (tokens.empty()) return m;
  for (Token t : tokens) m += table.row(t).transpose();
  return m / static_cast<double>(tokens.size());
}

double log_sum_exp(const Vector& x) {
  const double hi = x.maxCoeff();
  return hi + std::log((x.array() - hi).exp().sum());
}

}  // namespace

Vector SequencePolicy::history_context(std::span<const Token> history) const {
  check_tokens(history);
  if (history.empty()) return Vector::Zero(dim());
  return projection_ * mean_embedding(embeddings_, history);
}

Vector SequencePolicy::state(std::span<const Token> history, std::span<const Token> prefix) const {
  check_tokens(prefix);
  return history_context(history) + mean_embedding(embeddings_, prefix);
}

Vector SequencePolicy::logits_from_state(const Vector& state) const {
  return embeddings_ * state + bias_;
}

Vector SequencePolicy::next_token_logits(std::span<const Token> history,
                                         std::span<const Token> prefix) const {
  return logits_from_state(state(history, prefix));
}

double SequencePolicy::log_likelihood(std::span<const Token> history,
                                      std::span<const Token> prefix,
                                      std::span<const Token> continuation, PolicyGradient* grad,
                                      double weight) const {
  check_tokens(history);
  check_tokens(prefix);
  check_tokens(continuation);
  const int d = dim();
  const Vector hist_mean = mean_embedding(embeddings_, history);
  const Vector context = history.empty() ? Vector::Zero(d) : Vector(projection_ * hist_mean);

  Vector prefix_sum = Vector::Zero(d);
  for (Token t : prefix) prefix_sum += embeddings_.row(t).transpose();
  std::size_t count = prefix.size();

  // Per-step d(objective)/d(state) divided by the prefix length at that step;
  // suffix sums of these give the gradient reaching each prefix embedding.
  std::vector<Vector> state_grad_per_token;
  Vector context_grad = Vector::Zero(d);
  if (grad) state_grad_per_token.reserve(continuation.size());

  double total = 0.0;
  for (Token y : continuation) {
    Vector s = context;
    if (count > 0) s += prefix_sum / static_cast<double>(count);
    const Vector logits = embeddings_ * s + bias_;
    const double lse = log_sum_exp(logits);
    total += logits[y] - lse;

    if (grad) {
      // d(w * log p_y)/d(logits) = w * (onehot(y) - softmax)
      Vector g = -(logits.array() - lse).exp().matrix() * weight;
      g[y] += weight;
      grad->bias += g;
      grad->embeddings.noalias() += g * s.transpose();
      const Vector ds = embeddings_.transpose() * g;
      context_grad += ds;
      state_grad_per_token.push_back(count > 0 ? Vector(ds / static_cast<double>(count))
                                               : Vector(Vector::Zero(d)));
    }
    prefix_sum += embeddings_.row(y).transpose();
    ++count;
  }

  if (grad && !continuation.empty()) {
    if (!history.empty()) {
      grad->projection.noalias() += context_grad * hist_mean.transpose();
      const Vector per_hist =
          projection_.transpose() * context_grad / static_cast<double>(history.size());
      for (Token h : history) grad->embeddings.row(h) += per_hist.transpose();
    }
    // suffix[i] = sum over steps t >= i of state_grad_per_token[t]
    const std::size_t steps = continuation.size();
    std::vector<Vector> suffix(steps + 1, Vector::Zero(d));
    for (std::size_t t = steps; t-- > 0;) suffix[t] = suffix[t + 1] + state_grad_per_token[t];
    for (Token p : prefix) grad->embeddings.row(p) += suffix[0].transpose();
    for (std::size_t i = 0; i < steps; ++i) {
      grad->embeddings.row(continuation[i]) += suffix[i + 1].transpose();
    }
  }
  return total;
}

void SequencePolicy::apply(const PolicyGradient& step, double factor) {
  embeddings_ += factor * step.embeddings;
  projection_ += factor * step.projection;
  bias_ += factor * step.bias;
}

bool SequencePolicy::all_finite() const {
  return embeddings_.allFinite() && projection_.allFinite() && bias_.allFinite();
}

bool SequencePolicy::operator==(const SequencePolicy& other) const {
  return seed_ == other.seed_ && embeddings_.rows() == other.embeddings_.rows() &&
         embeddings_.cols() == other.embeddings_.cols() && embeddings_ == other.embeddings_ &&
         projection_ == other.projection_ && bias_ == other.bias_;
}

// ---------------------------------------------------------------------------

SequencePolicy init_policy(std::size_t vocab_size, int dim, std::uint64_t seed) {
  if (dim < 2) throw PreconditionError("init_policy: d must be >= 2");
  SequencePolicy policy(vocab_size, dim, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  auto draw = [&] { return static_cast<double>(static_cast<float>(normal(rng))); };
  for (Eigen::Index i = 0; i < policy.embeddings().size(); ++i) policy.embeddings().data()[i] = draw();
  for (Eigen::Index i = 0; i < policy.projection().size(); ++i) policy.projection().data()[i] = draw();
  return policy;
}

SequencePolicy init_policy(const ingest::Vocabulary& vocab, int dim, std::uint64_t seed) {
  return init_policy(vocab.size(), dim, seed);
}

Vector next_token_logits(const SequencePolicy& policy, std::span<const Token> history,
                         std::span<const Token> prefix) {
  return policy.next_token_logits(history, prefix);
}

Vector log_softmax(const Vector& logits) {
  return (logits.array() - log_sum_exp(logits)).matrix();
}

Vector softmax(const Vector& logits) { return log_softmax(logits).array().exp().matrix(); }

double sequence_log_likelihood(const SequencePolicy& policy, std::span<const Token> history,
                               std::span<const Token> target) {
  if (target.empty()) throw PreconditionError("sequence_log_likelihood: empty target");
  return policy.log_likelihood(history, {}, target);
}

double trajectory_log_likelihood(const SequencePolicy& policy, std::span<const Token> history,
                                 std::span<const Token> trajectory, PolicyGradient* grad,
                                 double weight) {
  if (trajectory.empty() || trajectory.front() != ingest::Vocabulary::kBos) {
    throw PreconditionError("trajectory must start with <bos>");
  }
  return policy.log_likelihood(history, trajectory.first(1), trajectory.subspan(1), grad, weight);
}

Vector final_hidden_state(const SequencePolicy& policy, std::span<const Token> history,
                          std::span<const Token> trajectory) {
  if (trajectory.empty()) throw PreconditionError("final_hidden_state: empty trajectory");
  return policy.state(history, trajectory);
}

double sl_loss(const SequencePolicy& policy, std::span<const TrainingPair> batch,
               PolicyGradient* grad) {
  std::size_t tokens = 0;
  for (const auto& pair : batch) {
    if (!pair.target.empty()) tokens += pair.target.size() - 1;
  }
  if (tokens == 0) throw PreconditionError("sl_loss: batch has no target tokens");
  const double weight = -1.0 / static_cast<double>(tokens);
  if (grad) *grad = PolicyGradient(policy.vocab_size(), policy.dim());
  double total = 0.0;
  for (const auto& pair : batch) {
    total += trajectory_log_likelihood(policy, pair.history, pair.target, grad, weight);
  }
  return -total / static_cast<double>(tokens);
}

double clip_gradient(PolicyGradient& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad.scale(max_norm / n);
  return n;
}

double sl_train_step(SequencePolicy& policy, std::span<const TrainingPair> batch, double lr,
                     double clip_norm) {
  if (!(lr > 0.0)) throw PreconditionError("sl_train_step: lr must be > 0");
  PolicyGradient grad(policy.vocab_size(), policy.dim());
  const double loss = sl_loss(policy, batch, &grad);
  if (!std::isfinite(loss) || !grad.all_finite()) {
    throw DivergenceError("sl_train_step: non-finite loss; reduce the learning rate");
  }
  clip_gradient(grad, clip_norm);
  policy.apply(grad, -lr);
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

void append_floats(std::string& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto f = static_cast<float>(data[i]);
    auto bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char buf[4];
    std::memcpy(buf, &bits, 4);
    out.append(buf, 4);
  }
}

void read_floats(const std::string& in, std::size_t& offset, double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, in.data() + offset, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    data[i] = static_cast<double>(std::bit_cast<float>(bits));
    offset += 4;
  }
}

}  // namespace

std::string serialize_policy(const SequencePolicy& policy) {
  const nlohmann::json header{{"format", "recpilot-policy"},
                              {"version", kCheckpointVersion},
                              {"dim", policy.dim()},
                              {"vocab_size", policy.vocab_size()},
                              {"seed", policy.seed()}};
  std::string out = header.dump();
  out += '\n';
  append_floats(out, policy.embeddings().data(), policy.embeddings().size());
  append_floats(out, policy.projection().data(), policy.projection().size());
  append_floats(out, policy.bias().data(), policy.bias().size());
  return out;
}

SequencePolicy deserialize_policy(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw ParseError("checkpoint: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("format", "") != "recpilot-policy" ||
      header.value("version", 0) != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported format or version");
  }
  const int dim = header.at("dim").get<int>();
  const auto vocab_size = header.at("vocab_size").get<std::size_t>();
  if (dim < 2 || vocab_size == 0) throw ParseError("checkpoint: invalid shape");
  SequencePolicy policy(vocab_size, dim, header.at("seed").get<std::uint64_t>());
  const std::size_t expected = 4 * (vocab_size * static_cast<std::size_t>(dim) +
                                    static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim) +
                                    vocab_size);
  if (bytes.size() - newline - 1 != expected) {
    throw ParseError("checkpoint: parameter blob has " + std::to_string(bytes.size() - newline - 1) +
                     " bytes, expected " + std::to_string(expected));
  }
  std::size_t offset = newline + 1;
  read_floats(bytes, offset, policy.embeddings().data(), policy.embeddings().size());
  read_floats(bytes, offset, policy.projection().data(), policy.projection().size());
  read_floats(bytes, offset, policy.bias().data(), policy.bias().size());
  return policy;
}

void save_checkpoint(const SequencePolicy& policy, const std::string& path) {
  write_file(path, serialize_policy(policy));
}

SequencePolicy load_checkpoint(const std::string& path, const ingest::Vocabulary& vocab) {
  auto policy = deserialize_policy(read_file(path));
  if (policy.vocab_size() != vocab.size()) {
    throw ParseError("checkpoint " + path + " has |V|=" + std::to_string(policy.vocab_size()) +
                     " but the vocabulary has " + std::to_string(vocab.size()));
  }
  return policy;
}

}  // namespace recpilot::policy
