#include "recpilot/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace recpilot::eval {

namespace {

template <typename T>
void check(const std::set<T>& relevant, int k) {
  if (k < 1) throw PreconditionError("ranking metric: k must be >= 1");
  if (relevant.empty()) throw PreconditionError("ranking metric: relevant set is empty");
}

template <typename T>
double recall(std::span<const T> ranked, const std::set<T>& relevant, int k) {
  check(relevant, k);
  std::set<T> hits;
  const auto n = std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(ranked[i])) hits.insert(ranked[i]);
  }
  return static_cast<double>(hits.size()) / static_cast<double>(relevant.size());
}

template <typename T>
double ndcg(std::span<const T> ranked, const std::set<T>& relevant, int k) {
  check(relevant, k);
  std::set<T> seen;
  double dcg = 0.0;
  const auto n = std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(ranked[i]) && seen.insert(ranked[i]).second) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  double ideal = 0.0;
  const auto hits = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < hits; ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

}  // namespace

double recall_at_k(std::span<const Token> ranked, const std::set<Token>& relevant, int k) {
  return recall(ranked, relevant, k);
}
double recall_at_k(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                   int k) {
  return recall(ranked, relevant, k);
}
double ndcg_at_k(std::span<const Token> ranked, const std::set<Token>& relevant, int k) {
  return ndcg(ranked, relevant, k);
}
double ndcg_at_k(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                 int k) {
  return ndcg(ranked, relevant, k);
}

}  // namespace recpilot::eval
