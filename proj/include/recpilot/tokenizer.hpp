#pragma once

// Action-prefixed session encoding: runs of same-action steps share one action
// token, framed by <bos>/<eos>:
//   [(click,a),(click,b),(purchase,c)] -> <bos> <click> a b <purchase> c <eos>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recpilot/common.hpp"
#include "recpilot/ingest.hpp"

namespace recpilot::tokenizer {

using ingest::Session;
using ingest::Step;
using ingest::Vocabulary;

using Trajectory = std::vector<Token>;

enum class FormatViolation {
  kStartsWithPurchase,
  kRepeatedActionNoItem,
  kMissingTerminalPurchase,
  kMalformedFrame,
};

std::string_view violation_name(FormatViolation v);

struct FormatVerdict {
  std::optional<FormatViolation> violation;
  bool ok() const { return !violation.has_value(); }
};

class FormatError : public Error {
 public:
  explicit FormatError(FormatViolation v)
      : Error("malformed trajectory: " + std::string(violation_name(v))), violation_(v) {}
  FormatViolation violation() const { return violation_; }

 private:
  FormatViolation violation_;
};

Trajectory tokenize_steps(std::span<const Step> steps, const Vocabulary& vocab);
Trajectory tokenize_session(const Session& session, const Vocabulary& vocab);
/// Concatenation of the framed encodings of each session, keeping only the
/// last `max_sessions` sessions when nonzero.
Trajectory tokenize_history(std::span<const Session> history, const Vocabulary& vocab,
                            std::size_t max_sessions = 0);

/// Structural check. Order of precedence: framing, purchase-first,
/// adjacent actions, terminal purchase.
FormatVerdict validate_format(std::span<const Token> tokens);

/// Inverse of tokenize_session; throws FormatError unless validate_format passes.
std::vector<Step> detokenize_trajectory(std::span<const Token> tokens, const Vocabulary& vocab);

/// Item tokens in order of appearance (actions and specials excluded).
std::vector<Token> item_tokens(std::span<const Token> tokens);

/// The last item of a format-valid trajectory (the purchased item); empty for
/// format-invalid streams.
std::optional<Token> predicted_final_item(std::span<const Token> tokens);

std::string to_string(std::span<const Token> tokens, const Vocabulary& vocab);
nlohmann::json to_json(std::span<const Token> tokens);
std::vector<std::string> to_symbols(std::span<const Token> tokens, const Vocabulary& vocab);

}  // namespace recpilot::tokenizer
