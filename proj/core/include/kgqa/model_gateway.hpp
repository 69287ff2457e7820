#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kgqa {

enum class BackendKind { gateway, mock, oracle, template_renderer };

std::string_view backend_kind_name(BackendKind kind);

// Field names and response layout of the chat-completion wire format.
struct GatewayWire {
  std::string instruction_role = "system";
  std::string input_role = "user";
  std::string model_field = "model";
  std::string messages_field = "messages";
  std::string role_field = "role";
  std::string content_field = "content";
  std::string temperature_field = "temperature";
  std::string max_tokens_field = "max_tokens";
  // Dotted path into the response body; numeric segments index arrays.
  std::string response_text_path = "choices.0.message.content";
};

struct BackendSpec {
  BackendKind kind = BackendKind::mock;
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "default";
  double temperature = 0.0;
  std::size_t max_output_tokens = 1024;
  std::size_t timeout_ms = 30000;
  std::size_t retries = 2;
  std::size_t backoff_ms = 250;
  std::size_t inflight_cap = 4;
  std::string resource;  // session file for mock and oracle backends
  // Credentials come from this environment variable, never from files.
  std::string api_key_env = "KGQA_API_KEY";
  GatewayWire wire;
};

// Parses "kind" or "kind:arg" as written on the command line. The arg is
// the session file for mock/oracle and the endpoint URL for gateway.
BackendSpec parse_backend_spec(std::string_view text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const std::string& instruction,
                               const std::string& input) = 0;
  virtual std::string name() const = 0;
};

// Replays canned exchanges. Lookup order: exact (instruction, input) pair,
// then input with no pinned instruction, then the session default.
// A miss throws MockMissError: it signals a test bug, never a model failure.
class MockBackend : public Backend {
 public:
  struct Exchange {
    std::optional<std::uint64_t> instruction_hash;
    std::string input;
    std::string output;
  };

  explicit MockBackend(const std::string& session_path);
  MockBackend(std::vector<Exchange> exchanges, std::optional<std::string> default_output);

  std::string complete(const std::string& instruction, const std::string& input) override;
  std::string name() const override { return "mock:" + label_; }

  static std::uint64_t instruction_key(std::string_view instruction);

 private:
  std::string label_;
  std::vector<Exchange> exchanges_;
  std::optional<std::string> default_output_;
};

// Replaces credential-bearing header values with "***".
std::string redacted_header_value(std::string_view name, std::string_view value);

class GatewayBackend : public Backend {
 public:
  explicit GatewayBackend(BackendSpec spec);

  // POSTs a two-message chat completion. Retries transport failures and
  // 429/5xx responses with exponential backoff; other failures throw
  // GatewayError immediately.
  std::string complete(const std::string& instruction, const std::string& input) override;
  std::string name() const override { return "gateway:" + spec_.model; }

  // Redacted request summary of the most recent call, for diagnostics.
  std::string describe_last_request() const;

 private:
  struct InflightGuard;
  std::string post_once(const std::string& body, int& status_out,
                        std::string& error_out);
  std::string extract_text(const std::string& body) const;

  BackendSpec spec_;
  std::string base_url_;
  std::string path_;
  mutable std::mutex mutex_;
  std::condition_variable slot_free_;
  std::size_t inflight_ = 0;
  std::string last_request_;
};

// Forwards to an inner backend and appends each exchange to a JSONL file.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::string record_path);

  std::string complete(const std::string& instruction, const std::string& input) override;
  std::string name() const override { return "recording(" + inner_->name() + ")"; }

 private:
  std::shared_ptr<Backend> inner_;
  std::string record_path_;
  std::mutex mutex_;
};

// Builds the backend for a spec. Template rendering needs no model calls,
// so template_renderer yields nullptr; stages handle that kind directly.
std::shared_ptr<Backend> make_backend(const BackendSpec& spec);

}  // namespace kgqa
