#include "recpilot/llm_provider.hpp"

namespace recpilot::llm {

namespace {

constexpr std::string_view kTaskOpen = "[TASK:";
constexpr std::string_view kDataOpen = "[DATA]";
constexpr std::string_view kDataClose = "[/DATA]";

}  // namespace

void ProviderConfig::validate() const {
  if (!(temperature >= 0.0)) throw PreconditionError("provider: temperature must be >= 0");
  if (max_tokens <= 0) throw PreconditionError("provider: max_tokens must be > 0");
  if (!(timeout_seconds > 0.0)) throw PreconditionError("provider: timeout must be > 0");
  if (max_retries < 0) throw PreconditionError("provider: max_retries must be >= 0");
  if (!(backoff_seconds >= 0.0)) throw PreconditionError("provider: backoff must be >= 0");
  if (embedding_dim < 1) throw PreconditionError("provider: embedding_dim must be >= 1");
  if (max_in_flight < 1 || max_in_flight > 256) {
    throw PreconditionError("provider: max_in_flight must be in [1, 256]");
  }
  if (kind == ProviderKind::kHttp && base_url.empty()) {
    throw PreconditionError("provider: base_url is required for the http provider");
  }
}

ProviderConfig provider_config_from_json(const nlohmann::json& doc) {
  ProviderConfig c;
  if (!doc.is_object()) throw ParseError("provider config must be an object");
  const auto kind = doc.value("kind", std::string("mock"));
  if (kind == "mock") {
    c.kind = ProviderKind::kMock;
  } else if (kind == "http") {
    c.kind = ProviderKind::kHttp;
  } else {
    throw ParseError("provider kind must be 'mock' or 'http', got '" + kind + "'");
  }
  c.base_url = doc.value("base_url", c.base_url);
  c.model = doc.value("model", c.model);
  c.embedding_model = doc.value("embedding_model", c.embedding_model);
  c.api_key_env = doc.value("api_key_env", c.api_key_env);
  c.temperature = doc.value("temperature", c.temperature);
  c.max_tokens = doc.value("max_tokens", c.max_tokens);
  c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
  c.max_retries = doc.value("max_retries", c.max_retries);
  c.backoff_seconds = doc.value("backoff_seconds", c.backoff_seconds);
  c.embedding_dim = doc.value("embedding_dim", c.embedding_dim);
  c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
  c.seed = doc.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json provider_config_to_json(const ProviderConfig& c) {
  return {{"kind", c.kind == ProviderKind::kMock ? "mock" : "http"},
          {"base_url", c.base_url},
          {"model", c.model},
          {"embedding_model", c.embedding_model},
          {"api_key_env", c.api_key_env},
          {"temperature", c.temperature},
          {"max_tokens", c.max_tokens},
          {"timeout_seconds", c.timeout_seconds},
          {"max_retries", c.max_retries},
          {"backoff_seconds", c.backoff_seconds},
          {"embedding_dim", c.embedding_dim},
          {"max_in_flight", c.max_in_flight},
          {"seed", c.seed}};
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config) {
  config.validate();
  if (config.kind == ProviderKind::kHttp) return std::make_unique<HttpProvider>(config);
  return std::make_unique<MockProvider>(config.seed, config.embedding_dim);
}

std::uint64_t prompt_hash(std::string_view system_prompt, std::string_view user_prompt) {
  std::uint64_t h = fnv1a64(system_prompt);
  h = fnv1a64("\x1f", h);
  return fnv1a64(user_prompt, h);
}

std::string make_prompt(std::string_view task, std::string_view instructions,
                        const nlohmann::json& data) {
  std::string out;
  out += kTaskOpen;
  out += task;
  out += "]\n";
  out += instructions;
  out += "\n";
  out += kDataOpen;
  out += data.dump();
  out += kDataClose;
  return out;
}

std::optional<std::string> task_tag(std::string_view prompt) {
  const auto open = prompt.find(kTaskOpen);
  if (open == std::string_view::npos) return std::nullopt;
  const auto start = open + kTaskOpen.size();
  const auto close = prompt.find(']', start);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(prompt.substr(start, close - start));
}

std::optional<nlohmann::json> data_block(std::string_view prompt) {
  const auto open = prompt.find(kDataOpen);
  if (open == std::string_view::npos) return std::nullopt;
  const auto start = open + kDataOpen.size();
  const auto close = prompt.rfind(kDataClose);
  if (close == std::string_view::npos || close < start) return std::nullopt;
  auto parsed = nlohmann::json::parse(prompt.substr(start, close - start), nullptr, false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

nlohmann::json extract_json(std::string_view text) {
  auto attempt = [](std::string_view s) {
    return nlohmann::json::parse(s, nullptr, false);
  };
  auto direct = attempt(trim(text));
  if (!direct.is_discarded()) return direct;

  // Fenced block.
  if (const auto fence = text.find("```"); fence != std::string_view::npos) {
    auto body_start = text.find('\n', fence);
    const auto end = body_start == std::string_view::npos ? std::string_view::npos
                                                          : text.find("```", body_start);
    if (end != std::string_view::npos) {
      auto fenced = attempt(text.substr(body_start + 1, end - body_start - 1));
      if (!fenced.is_discarded()) return fenced;
    }
  }
  // Outermost braces or brackets.
  for (auto [open, close] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
    const auto a = text.find(open);
    const auto b = text.rfind(close);
    if (a != std::string_view::npos && b != std::string_view::npos && b > a) {
      auto inner = attempt(text.substr(a, b - a + 1));
      if (!inner.is_discarded()) return inner;
    }
  }
  throw MalformedResponseError("model output contains no parsable JSON");
}

}  // namespace recpilot::llm
