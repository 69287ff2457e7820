#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "kgqa/errors.hpp"
#include "kgqa/model_gateway.hpp"
#include "support/test_util.hpp"

using namespace kgqa;

namespace {

// Local chat-completion stub; handler decides status and body per attempt.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  Handler handler_;
  int port_ = 0;
  std::thread thread_;
};

void reply_text(httplib::Response& res, const std::string& text) {
  nlohmann::json body{{"choices", {{{"message", {{"content", text}}}}}}};
  res.set_content(body.dump(), "application/json");
}

BackendSpec gateway_spec(const std::string& endpoint) {
  BackendSpec spec;
  spec.kind = BackendKind::gateway;
  spec.endpoint = endpoint;
  spec.retries = 2;
  spec.backoff_ms = 1;
  spec.timeout_ms = 2000;
  return spec;
}

}  // namespace

TEST_CASE("parse_backend_spec reads kind and argument") {
  CHECK(parse_backend_spec("mock:session.json").kind == BackendKind::mock);
  CHECK(parse_backend_spec("mock:session.json").resource == "session.json");
  CHECK(parse_backend_spec("oracle:gold.tsv").kind == BackendKind::oracle);
  CHECK(parse_backend_spec("template").kind == BackendKind::template_renderer);
  CHECK(parse_backend_spec("gateway").kind == BackendKind::gateway);
  CHECK(parse_backend_spec("gateway:http://example.test/v1").endpoint ==
        "http://example.test/v1");
  CHECK_THROWS_AS(parse_backend_spec("carrier-pigeon"), std::invalid_argument);
  CHECK_THROWS_AS(parse_backend_spec("mock"), std::invalid_argument);
  CHECK_THROWS_AS(parse_backend_spec("oracle"), std::invalid_argument);
}

TEST_CASE("backend_kind_name names every kind") {
  CHECK(backend_kind_name(BackendKind::gateway) == "gateway");
  CHECK(backend_kind_name(BackendKind::mock) == "mock");
  CHECK(backend_kind_name(BackendKind::oracle) == "oracle");
  CHECK(backend_kind_name(BackendKind::template_renderer) == "template");
}

TEST_CASE("mock backend lookup prefers the pinned instruction") {
  std::vector<MockBackend::Exchange> exchanges{
      {MockBackend::instruction_key("special"), "ping", "pinned"},
      {std::nullopt, "ping", "loose"},
  };
  MockBackend mock(exchanges, std::string("fallback"));
  CHECK(mock.complete("special", "ping") == "pinned");
  CHECK(mock.complete("other", "ping") == "loose");
  CHECK(mock.complete("other", "unknown") == "fallback");

  MockBackend no_default(exchanges, std::nullopt);
  CHECK_THROWS_AS(no_default.complete("other", "unknown"), MockMissError);
}

TEST_CASE("mock backend loads object sessions and jsonl sessions") {
  kgqa::test::TempDir dir;

  std::string object_path = dir.file("session.json");
  kgqa::test::write_file(object_path,
                         R"({"exchanges": [{"input": "hi", "output": "hello"}],)"
                         R"( "default": "dunno"})");
  MockBackend object_mock(object_path);
  CHECK(object_mock.complete("any", "hi") == "hello");
  CHECK(object_mock.complete("any", "bye") == "dunno");

  std::string jsonl_path = dir.file("session.jsonl");
  kgqa::test::write_file(jsonl_path,
                         "{\"instruction\": \"sys\", \"input\": \"a\", \"output\": \"1\"}\n"
                         "{\"input\": \"b\", \"output\": \"2\"}\n");
  MockBackend jsonl_mock(jsonl_path);
  CHECK(jsonl_mock.complete("sys", "a") == "1");
  CHECK(jsonl_mock.complete("other", "b") == "2");
  CHECK_THROWS_AS(jsonl_mock.complete("other", "c"), MockMissError);

  CHECK_THROWS(MockBackend(dir.file("missing.json")));
}

TEST_CASE("redacted_header_value hides credential-bearing headers") {
  CHECK(redacted_header_value("Authorization", "Bearer sk-secret") == "***");
  CHECK(redacted_header_value("authorization", "token") == "***");
  CHECK(redacted_header_value("X-Api-Key", "abc") == "***");
  CHECK(redacted_header_value("Content-Type", "application/json") == "application/json");
}

TEST_CASE("gateway posts the chat-completion wire format") {
  nlohmann::json seen;
  std::string auth_header;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth_header = req.get_header_value("Authorization");
    reply_text(res, "pong");
  });

  setenv("KGQA_API_KEY", "sk-test-value", 1);
  GatewayBackend backend(gateway_spec(server.endpoint()));
  CHECK(backend.complete("be helpful", "ping") == "pong");
  unsetenv("KGQA_API_KEY");

  CHECK(seen["model"] == "default");
  REQUIRE(seen["messages"].size() == 2);
  CHECK(seen["messages"][0]["role"] == "system");
  CHECK(seen["messages"][0]["content"] == "be helpful");
  CHECK(seen["messages"][1]["role"] == "user");
  CHECK(seen["messages"][1]["content"] == "ping");
  CHECK(seen["temperature"] == 0.0);
  CHECK(seen.contains("max_tokens"));
  CHECK(auth_header == "Bearer sk-test-value");
}

TEST_CASE("gateway omits the authorization header without the env var") {
  bool had_auth = true;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    had_auth = req.has_header("Authorization");
    reply_text(res, "ok");
  });
  unsetenv("KGQA_API_KEY");
  GatewayBackend backend(gateway_spec(server.endpoint()));
  CHECK(backend.complete("i", "q") == "ok");
  CHECK_FALSE(had_auth);
}

TEST_CASE("describe_last_request redacts the credential") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    reply_text(res, "ok");
  });
  setenv("KGQA_API_KEY", "sk-very-secret", 1);
  GatewayBackend backend(gateway_spec(server.endpoint()));
  backend.complete("i", "q");
  std::string description = backend.describe_last_request();
  unsetenv("KGQA_API_KEY");

  CHECK(description.find("Authorization: ***") != std::string::npos);
  CHECK(description.find("sk-very-secret") == std::string::npos);
}

TEST_CASE("gateway retries transient failures until success") {
  std::atomic<int> attempts{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    int n = ++attempts;
    if (n <= 2) {
      res.status = 500;
      res.set_content("boom", "text/plain");
      return;
    }
    reply_text(res, "recovered");
  });
  GatewayBackend backend(gateway_spec(server.endpoint()));
  CHECK(backend.complete("i", "q") == "recovered");
  CHECK(attempts.load() == 3);
}

TEST_CASE("gateway gives up after retries are exhausted") {
  std::atomic<int> attempts{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 503;
    res.set_content("overloaded", "text/plain");
  });
  GatewayBackend backend(gateway_spec(server.endpoint()));
  try {
    backend.complete("i", "q");
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.status() == 503);
    CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
  }
  CHECK(attempts.load() == 3);
}

TEST_CASE("gateway does not retry a client error") {
  std::atomic<int> attempts{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  GatewayBackend backend(gateway_spec(server.endpoint()));
  try {
    backend.complete("i", "q");
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(attempts.load() == 1);
}

TEST_CASE("gateway surfaces an unusable response body") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": true}", "application/json");
  });
  GatewayBackend backend(gateway_spec(server.endpoint()));
  CHECK_THROWS_AS(backend.complete("i", "q"), GatewayError);
}

TEST_CASE("gateway rejects an endpoint that is not a full url") {
  BackendSpec spec = gateway_spec("not-a-url");
  CHECK_THROWS_AS(GatewayBackend{spec}, std::invalid_argument);
}

TEST_CASE("recording backend appends replayable exchanges") {
  kgqa::test::TempDir dir;
  std::string record_path = dir.file("session.jsonl");

  std::vector<MockBackend::Exchange> exchanges{
      {std::nullopt, "one", "first"},
      {std::nullopt, "two", "second"},
  };
  RecordingBackend recorder(std::make_shared<MockBackend>(exchanges, std::nullopt),
                            record_path);
  CHECK(recorder.complete("sys", "one") == "first");
  CHECK(recorder.complete("sys", "two") == "second");
  CHECK(recorder.name().rfind("recording(", 0) == 0);

  MockBackend replay(record_path);
  CHECK(replay.complete("sys", "one") == "first");
  CHECK(replay.complete("sys", "two") == "second");
  CHECK_THROWS_AS(replay.complete("other-instruction", "one"), MockMissError);
}

TEST_CASE("make_backend builds each kind") {
  kgqa::test::TempDir dir;
  std::string session = dir.file("session.json");
  kgqa::test::write_file(session, R"({"exchanges": []})");

  BackendSpec mock_spec;
  mock_spec.kind = BackendKind::mock;
  mock_spec.resource = session;
  CHECK(make_backend(mock_spec) != nullptr);

  BackendSpec gateway = gateway_spec("http://127.0.0.1:1/v1/chat/completions");
  CHECK(make_backend(gateway) != nullptr);

  BackendSpec renderer;
  renderer.kind = BackendKind::template_renderer;
  CHECK(make_backend(renderer) == nullptr);
}
