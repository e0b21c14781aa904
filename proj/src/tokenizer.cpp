#include "recpilot/tokenizer.hpp"

namespace recpilot::tokenizer {

std::string_view violation_name(FormatViolation v) {
  switch (v) {
    case FormatViolation::kStartsWithPurchase:
      return "starts_with_purchase";
    case FormatViolation::kRepeatedActionNoItem:
      return "repeated_action_no_item";
    case FormatViolation::kMissingTerminalPurchase:
      return "missing_terminal_purchase";
    case FormatViolation::kMalformedFrame:
      return "malformed_frame";
  }
  return "unknown";
}

Trajectory tokenize_steps(std::span<const Step> steps, const Vocabulary& vocab) {
  Trajectory out;
  out.reserve(2 * steps.size() + 2);
  out.push_back(Vocabulary::kBos);
  std::optional<Action> current;
  for (const auto& step : steps) {
    const Token item = vocab.item_token(step.item_id);
    if (!current || *current != step.action) {
      out.push_back(Vocabulary::action_token(step.action));
      current = step.action;
    }
    out.push_back(item);
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

Trajectory tokenize_session(const Session& session, const Vocabulary& vocab) {
  return tokenize_steps(session.steps, vocab);
}

Trajectory tokenize_history(std::span<const Session> history, const Vocabulary& vocab,
                            std::size_t max_sessions) {
  if (max_sessions > 0 && history.size() > max_sessions) {
    history = history.subspan(history.size() - max_sessions);
  }
  Trajectory out;
  for (const auto& s : history) {
    const auto t = tokenize_session(s, vocab);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

FormatVerdict validate_format(std::span<const Token> tokens) {
  auto fail = [](FormatViolation v) { return FormatVerdict{v}; };
  if (tokens.size() < 3 || tokens.front() != Vocabulary::kBos ||
      tokens.back() != Vocabulary::kEos) {
    return fail(FormatViolation::kMalformedFrame);
  }
  const auto body = tokens.subspan(1, tokens.size() - 2);
  for (Token t : body) {
    if (t < 0 || Vocabulary::is_special(t)) return fail(FormatViolation::kMalformedFrame);
  }
  if (!Vocabulary::is_action(body.front())) return fail(FormatViolation::kMalformedFrame);
  if (body.front() == Vocabulary::kPurchase) return fail(FormatViolation::kStartsWithPurchase);
  Token last_action = body.front();
  for (std::size_t i = 1; i < body.size(); ++i) {
    if (Vocabulary::is_action(body[i])) {
      if (Vocabulary::is_action(body[i - 1])) return fail(FormatViolation::kRepeatedActionNoItem);
      last_action = body[i];
    }
  }
  if (last_action != Vocabulary::kPurchase || Vocabulary::is_action(body.back())) {
    return fail(FormatViolation::kMissingTerminalPurchase);
  }
  return {};
}

std::vector<Step> detokenize_trajectory(std::span<const Token> tokens, const Vocabulary& vocab) {
  const auto verdict = validate_format(tokens);
  if (!verdict.ok()) throw FormatError(*verdict.violation);
  std::vector<Step> steps;
  Action current = Action::kClick;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    const Token t = tokens[i];
    if (auto a = Vocabulary::action_of(t)) {
      current = *a;
    } else {
      steps.push_back({current, vocab.symbol(t)});
    }
  }
  return steps;
}

std::vector<Token> item_tokens(std::span<const Token> tokens) {
  std::vector<Token> items;
  for (Token t : tokens) {
    if (Vocabulary::is_item(t)) items.push_back(t);
  }
  return items;
}

std::optional<Token> predicted_final_item(std::span<const Token> tokens) {
  if (!validate_format(tokens).ok()) return std::nullopt;
  return tokens[tokens.size() - 2];
}

std::string to_string(std::span<const Token> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.contains(tokens[i]) ? vocab.symbol(tokens[i]) : "<?" + std::to_string(tokens[i]) + ">";
  }
  return out;
}

nlohmann::json to_json(std::span<const Token> tokens) {
  return nlohmann::json(std::vector<Token>(tokens.begin(), tokens.end()));
}

std::vector<std::string> to_symbols(std::span<const Token> tokens, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (Token t : tokens) out.push_back(vocab.symbol(t));
  return out;
}

}  // namespace recpilot::tokenizer
