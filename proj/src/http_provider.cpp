#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "recpilot/llm_provider.hpp"

namespace recpilot::llm {

namespace {

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<256>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;
  std::counting_semaphore<256>& sem;
};

bool transient_status(int status) { return status == 429 || status >= 500; }

std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw MalformedResponseError("embedding response is the zero vector");
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config)
    : config_(std::move(config)), in_flight_(config_.max_in_flight) {
  config_.validate();
  const auto scheme = config_.base_url.find("://");
  if (scheme == std::string::npos) {
    throw PreconditionError("provider: base_url needs a scheme: " + config_.base_url);
  }
  const auto path = config_.base_url.find('/', scheme + 3);
  origin_ = config_.base_url.substr(0, path);
  prefix_ = path == std::string::npos ? "" : config_.base_url.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string HttpProvider::api_key() const {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("provider: environment variable " + config_.api_key_env +
                    " holding the API key is not set");
  }
  return key;
}

HttpProvider::Reply HttpProvider::post(const std::string& path, const nlohmann::json& body) {
  const std::string key = api_key();
  SemaphoreGuard guard(in_flight_);

  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - std::floor(config_.timeout_seconds)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const httplib::Headers headers{{"Authorization", "Bearer " + key}};
  const std::string payload = body.dump();
  const std::string url = prefix_ + path;
  spdlog::debug(R"({{"event":"request","url":"{}","authorization":"Bearer ***","body":{}}})",
                origin_ + url, payload);

  std::string last_problem;
  bool connection_failure = false;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double wait = config_.backoff_seconds * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    auto res = client.Post(url, headers, payload, "application/json");
    if (!res) {
      connection_failure = true;
      last_problem = httplib::to_string(res.error());
      spdlog::warn("provider: {} on attempt {}", last_problem, attempt + 1);
      continue;
    }
    spdlog::debug(R"({{"event":"response","status":{},"body":{}}})", res->status,
                  nlohmann::json(res->body).dump());
    if (res->status == 401 || res->status == 403) {
      throw AuthError("provider: credentials rejected with HTTP " + std::to_string(res->status));
    }
    if (transient_status(res->status)) {
      connection_failure = false;
      last_problem = "HTTP " + std::to_string(res->status);
      spdlog::warn("provider: {} on attempt {}", last_problem, attempt + 1);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("provider: request failed with HTTP " + std::to_string(res->status));
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw MalformedResponseError("provider: response body is not JSON");
    return {std::move(parsed), attempt};
  }
  throw TimeoutError("provider: gave up after " + std::to_string(config_.max_retries) +
                     " retries (" + (connection_failure ? "connection: " : "") + last_problem + ")");
}

ChatResponse HttpProvider::chat(const std::string& system_prompt, const std::string& user_prompt) {
  const nlohmann::json body = {
      {"model", config_.model},
      {"messages",
       {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_prompt}}}},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_tokens}};
  auto reply = post("/chat/completions", body);
  ChatResponse out;
  out.retries = reply.retries;
  try {
    out.text = reply.body.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.body.contains("usage")) {
      const auto& u = reply.body["usage"];
      out.usage.prompt_tokens = u.value("prompt_tokens", 0);
      out.usage.completion_tokens = u.value("completion_tokens", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("provider: unexpected chat response shape: ") + e.what());
  }
  if (out.text.empty()) throw MalformedResponseError("provider: empty chat response");
  return out;
}

std::vector<double> HttpProvider::embed(const std::string& text) {
  if (text.empty()) throw PreconditionError("embed: text must be nonempty");
  const nlohmann::json body = {{"model", config_.embedding_model}, {"input", text}};
  auto reply = post("/embeddings", body);
  try {
    return normalized(reply.body.at("data").at(0).at("embedding").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("provider: unexpected embedding response shape: ") +
                                 e.what());
  }
}

}  // namespace recpilot::llm
