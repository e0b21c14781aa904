#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "recpilot/llm_provider.hpp"

namespace recpilot::llm {
namespace {

using nlohmann::json;

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Prompt, TagAndDataBlockRoundTrip) {
  const auto prompt = make_prompt("decompose_aspects", "Split the interest.", json{{"n_max", 2}});
  EXPECT_EQ(task_tag(prompt), "decompose_aspects");
  EXPECT_EQ(data_block(prompt), (json{{"n_max", 2}}));
  EXPECT_FALSE(task_tag("plain text").has_value());
}

TEST(ExtractJson, ToleratesFencesAndProse) {
  EXPECT_EQ(extract_json("```json\n{\"a\": 1}\n```"), (json{{"a", 1}}));
  EXPECT_EQ(extract_json("Sure! Here it is: {\"a\": [1, 2]} Hope that helps."), (json{{"a", {1, 2}}}));
  EXPECT_THROW(extract_json("no json here"), MalformedResponseError);
}

TEST(MockProvider, ScriptedHashWins) {
  MockProvider m;
  m.script(prompt_hash("sys", "hello"), "OK");
  EXPECT_EQ(m.chat("sys", "hello").text, "OK");
  EXPECT_EQ(m.calls().size(), 1u);
}

TEST(MockProvider, QueueThenHandlerThenDefault) {
  MockProvider m;
  const auto prompt = make_prompt("judge_report", "", json::object());
  m.enqueue("judge_report", "first");
  m.set_handler("judge_report", [](const json&, const std::string&) { return std::string("handled"); });
  EXPECT_EQ(m.chat("", prompt).text, "first");
  EXPECT_EQ(m.chat("", prompt).text, "handled");
  EXPECT_EQ(m.call_count("judge_report"), 2u);
  m.fail_next("judge_report");
  EXPECT_THROW(m.chat("", prompt), ProviderError);
  EXPECT_EQ(m.chat("", prompt).text, "handled");
}

TEST(MockProvider, EmbeddingsAreDeterministicUnitVectors) {
  MockProvider m(3, 32);
  const auto a = m.embed("red shoes");
  EXPECT_EQ(a, m.embed("red shoes"));
  EXPECT_EQ(a.size(), 32u);
  EXPECT_NEAR(norm(a), 1.0, 1e-9);
  EXPECT_LT(dot(a, m.embed("red shoes!")), 1.0 - 1e-6);
  EXPECT_NE(a, MockProvider(4, 32).embed("red shoes"));
  EXPECT_THROW(m.embed(""), PreconditionError);
}

TEST(MockProvider, ChatIsDeterministicAcrossInstances) {
  const auto prompt = make_prompt("summarize_intent", "x", json{{"candidates", json::array()}});
  EXPECT_EQ(MockProvider(1).chat("s", prompt).text, MockProvider(1).chat("s", prompt).text);
}

TEST(ProviderConfig, ValidationAndJson) {
  ProviderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.temperature = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.max_tokens = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.kind = ProviderKind::kHttp;
  c.model = "m1";
  const auto back = provider_config_from_json(provider_config_to_json(c));
  EXPECT_EQ(back.kind, ProviderKind::kHttp);
  EXPECT_EQ(back.model, "m1");
  EXPECT_DOUBLE_EQ(back.temperature, 0.2);
  EXPECT_EQ(back.max_tokens, 16384);
}

// Local fault-injection server speaking the chat-completion wire shape.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      last_body = req.body;
      if (failures.load() > 0) {
        --failures;
        res.status = status_on_failure;
        return;
      }
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"pong"}}],)"
                      R"("usage":{"prompt_tokens":3,"completion_tokens":1}})",
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
    });
    port = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  ProviderConfig config() const {
    ProviderConfig c;
    c.kind = ProviderKind::kHttp;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.api_key_env = "RECPILOT_TEST_KEY";
    c.backoff_seconds = 0.01;
    c.timeout_seconds = 5;
    c.max_retries = 2;
    return c;
  }

  std::atomic<int> hits{0};
  std::atomic<int> failures{0};
  int status_on_failure = 503;
  std::string last_auth;
  std::string last_body;
  int port = 0;

 private:
  httplib::Server server_;
  std::thread thread_;
};

class HttpProviderTest : public ::testing::Test {
 protected:
  void SetUp() override { ::setenv("RECPILOT_TEST_KEY", "sk-test", 1); }
  void TearDown() override { ::unsetenv("RECPILOT_TEST_KEY"); }
  FakeServer server;
};

TEST_F(HttpProviderTest, SendsBearerAndParsesReply) {
  HttpProvider p(server.config());
  const auto r = p.chat("system", "ping");
  EXPECT_EQ(r.text, "pong");
  EXPECT_EQ(r.retries, 0);
  EXPECT_EQ(r.usage.prompt_tokens, 3);
  EXPECT_EQ(server.last_auth, "Bearer sk-test");
  const auto body = json::parse(server.last_body);
  EXPECT_EQ(body["messages"].size(), 2u);
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  EXPECT_EQ(body["max_tokens"], 16384);
}

TEST_F(HttpProviderTest, RetriesTransientFailure) {
  server.failures = 1;
  HttpProvider p(server.config());
  const auto r = p.chat("s", "u");
  EXPECT_EQ(r.text, "pong");
  EXPECT_EQ(r.retries, 1);
  EXPECT_EQ(server.hits, 2);
}

TEST_F(HttpProviderTest, GivesUpAfterMaxRetries) {
  server.failures = 10;
  HttpProvider p(server.config());
  EXPECT_THROW(p.chat("s", "u"), TimeoutError);
  EXPECT_EQ(server.hits, 3);
}

TEST_F(HttpProviderTest, RejectedCredentialsAreNotRetried) {
  server.failures = 10;
  server.status_on_failure = 401;
  HttpProvider p(server.config());
  EXPECT_THROW(p.chat("s", "u"), AuthError);
  EXPECT_EQ(server.hits, 1);
}

TEST_F(HttpProviderTest, MissingKeyFailsBeforeAnyRequest) {
  ::unsetenv("RECPILOT_TEST_KEY");
  HttpProvider p(server.config());
  EXPECT_THROW(p.chat("s", "u"), AuthError);
  EXPECT_EQ(server.hits, 0);
}

TEST_F(HttpProviderTest, EmbeddingsAreNormalized) {
  HttpProvider p(server.config());
  const auto v = p.embed("text");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0], 0.6, 1e-12);
  EXPECT_NEAR(v[1], 0.8, 1e-12);
}

TEST(HttpProvider, UnreachableServerTimesOut) {
  ::setenv("RECPILOT_TEST_KEY", "k", 1);
  ProviderConfig c;
  c.kind = ProviderKind::kHttp;
  c.base_url = "http://127.0.0.1:9/v1";
  c.api_key_env = "RECPILOT_TEST_KEY";
  c.max_retries = 1;
  c.backoff_seconds = 0.01;
  c.timeout_seconds = 1;
  HttpProvider p(c);
  EXPECT_THROW(p.chat("s", "u"), TimeoutError);
  ::unsetenv("RECPILOT_TEST_KEY");
}

TEST(MakeProvider, KindSelectsImplementation) {
  ProviderConfig c;
  EXPECT_NE(dynamic_cast<MockProvider*>(make_provider(c).get()), nullptr);
  c.kind = ProviderKind::kHttp;
  EXPECT_NE(dynamic_cast<HttpProvider*>(make_provider(c).get()), nullptr);
}

}  // namespace
}  // namespace recpilot::llm
