#pragma once

// Chat-completion and embedding services behind one interface: a JSON-over-HTTP
// client and a deterministic, template-driven mock.
//
// Prompts built by the library carry a machine-readable task tag
// "[TASK:name]" and a JSON payload between "[DATA]" and "[/DATA]" so that the
// mock can answer without understanding prose.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recpilot/common.hpp"

namespace recpilot::llm {

class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Missing or rejected credentials. Never retried.
class AuthError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Transient failures persisted through every retry.
class TimeoutError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class MalformedResponseError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

enum class ProviderKind { kMock, kHttp };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kMock;
  std::string base_url = "http://localhost:8000/v1";
  std::string model = "mock";
  std::string embedding_model = "mock-embed";
  std::string api_key_env = "RECPILOT_API_KEY";
  double temperature = 0.2;
  int max_tokens = 16384;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_seconds = 0.5;  // doubled after every retry
  int embedding_dim = 64;        // mock only
  int max_in_flight = 4;
  std::uint64_t seed = 0;  // mock only

  void validate() const;
};

ProviderConfig provider_config_from_json(const nlohmann::json& doc);
nlohmann::json provider_config_to_json(const ProviderConfig& config);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  int retries = 0;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse chat(const std::string& system_prompt, const std::string& user_prompt) = 0;
  /// Unit-norm vector; deterministic per (provider, model, text).
  virtual std::vector<double> embed(const std::string& text) = 0;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& config);

std::uint64_t prompt_hash(std::string_view system_prompt, std::string_view user_prompt);

/// "[TASK:task]\n<instructions>\n[DATA]<json>[/DATA]"
std::string make_prompt(std::string_view task, std::string_view instructions,
                        const nlohmann::json& data);
std::optional<std::string> task_tag(std::string_view prompt);
std::optional<nlohmann::json> data_block(std::string_view prompt);

/// Parses a JSON value out of model output, tolerating code fences and
/// surrounding prose. Throws MalformedResponseError.
nlohmann::json extract_json(std::string_view text);

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config);
  ChatResponse chat(const std::string& system_prompt, const std::string& user_prompt) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  struct Reply {
    nlohmann::json body;
    int retries = 0;
  };
  Reply post(const std::string& path, const nlohmann::json& body);
  std::string api_key() const;

  ProviderConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path below the origin, no trailing slash
  std::counting_semaphore<256> in_flight_;
};

/// Deterministic offline provider. Resolution order for chat: exact prompt
/// hash script, queued responses for the task tag, custom task handler,
/// built-in default for the task tag.
class MockProvider final : public Provider {
 public:
  using Handler = std::function<std::string(const nlohmann::json& data, const std::string& prompt)>;

  struct Call {
    std::string task;
    std::uint64_t hash = 0;
  };

  explicit MockProvider(std::uint64_t seed = 0, int embedding_dim = 64);

  ChatResponse chat(const std::string& system_prompt, const std::string& user_prompt) override;
  std::vector<double> embed(const std::string& text) override;

  void script(std::uint64_t hash, std::string response);
  void enqueue(const std::string& task, std::string response);
  void set_handler(const std::string& task, Handler handler);
  /// The next `count` calls for `task` throw ProviderError.
  void fail_next(const std::string& task, int count = 1);

  std::vector<Call> calls() const;
  std::size_t call_count(const std::string& task) const;

 private:
  std::string respond(const std::string& task, const nlohmann::json& data,
                      const std::string& prompt) const;

  std::uint64_t seed_;
  int dim_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::string> scripted_;
  std::map<std::string, std::deque<std::string>> queued_;
  std::map<std::string, Handler> handlers_;
  std::map<std::string, int> failures_;
  std::vector<Call> calls_;
};

}  // namespace recpilot::llm
