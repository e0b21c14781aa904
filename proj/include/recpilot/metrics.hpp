#pragma once

// Binary-relevance ranking metrics.

#include <set>
#include <span>
#include <string>

#include "recpilot/common.hpp"

namespace recpilot::eval {

/// |top-k ∩ relevant| / |relevant|. Repeated items in `ranked` count once.
double recall_at_k(std::span<const Token> ranked, const std::set<Token>& relevant, int k);
double recall_at_k(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                   int k);

/// DCG over the top k with gain 1 / log2(rank + 1), divided by the ideal DCG
/// of min(k, |relevant|) hits.
double ndcg_at_k(std::span<const Token> ranked, const std::set<Token>& relevant, int k);
double ndcg_at_k(std::span<const std::string> ranked, const std::set<std::string>& relevant,
                 int k);

}  // namespace recpilot::eval
