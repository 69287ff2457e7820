#include "kgqa/model_gateway.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "kgqa/errors.hpp"
#include "kgqa/template_index.hpp"

namespace kgqa {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

std::vector<std::string> split_path(std::string_view dotted) {
  std::vector<std::string> segments;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    std::size_t dot = dotted.find('.', start);
    if (dot == std::string_view::npos) {
      segments.emplace_back(dotted.substr(start));
      break;
    }
    segments.emplace_back(dotted.substr(start, dot - start));
    start = dot + 1;
  }
  return segments;
}

}  // namespace

std::string_view backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::gateway: return "gateway";
    case BackendKind::mock: return "mock";
    case BackendKind::oracle: return "oracle";
    case BackendKind::template_renderer: return "template";
  }
  return "unknown";
}

BackendSpec parse_backend_spec(std::string_view text) {
  std::size_t colon = text.find(':');
  std::string kind(colon == std::string_view::npos ? text : text.substr(0, colon));
  std::string arg(colon == std::string_view::npos ? std::string_view{}
                                                  : text.substr(colon + 1));
  BackendSpec spec;
  if (kind == "gateway") {
    spec.kind = BackendKind::gateway;
    if (!arg.empty()) spec.endpoint = arg;
  } else if (kind == "mock") {
    if (arg.empty()) throw std::invalid_argument("mock backend needs a session file");
    spec.kind = BackendKind::mock;
    spec.resource = arg;
  } else if (kind == "oracle") {
    if (arg.empty()) throw std::invalid_argument("oracle backend needs a fixture file");
    spec.kind = BackendKind::oracle;
    spec.resource = arg;
  } else if (kind == "template") {
    spec.kind = BackendKind::template_renderer;
  } else {
    throw std::invalid_argument("unknown backend kind: " + kind);
  }
  return spec;
}

std::uint64_t MockBackend::instruction_key(std::string_view instruction) {
  return fnv1a64(instruction);
}

MockBackend::MockBackend(std::vector<Exchange> exchanges,
                         std::optional<std::string> default_output)
    : label_("inline"),
      exchanges_(std::move(exchanges)),
      default_output_(std::move(default_output)) {}

MockBackend::MockBackend(const std::string& session_path) : label_(session_path) {
  std::ifstream in(session_path);
  if (!in) throw std::runtime_error("cannot open mock session: " + session_path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto add_exchange = [this, &session_path](const nlohmann::json& obj) {
    if (!obj.is_object()) {
      throw std::runtime_error("mock session entry is not an object: " + session_path);
    }
    if (obj.contains("default") && !obj.contains("input")) {
      default_output_ = obj.at("default").get<std::string>();
      return;
    }
    Exchange ex;
    if (obj.contains("instruction")) {
      ex.instruction_hash = instruction_key(obj.at("instruction").get<std::string>());
    }
    ex.input = obj.at("input").get<std::string>();
    ex.output = obj.at("output").get<std::string>();
    exchanges_.push_back(std::move(ex));
  };

  nlohmann::json whole = nlohmann::json::parse(text, nullptr, false);
  if (!whole.is_discarded()) {
    if (whole.is_object() && whole.contains("exchanges")) {
      for (const nlohmann::json& obj : whole.at("exchanges")) add_exchange(obj);
      if (whole.contains("default")) default_output_ = whole.at("default").get<std::string>();
      return;
    }
    if (whole.is_object()) {
      add_exchange(whole);
      return;
    }
    throw std::runtime_error("unsupported mock session layout: " + session_path);
  }

  // Fall back to one JSON object per line.
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    add_exchange(nlohmann::json::parse(line));
  }
}

std::string MockBackend::complete(const std::string& instruction, const std::string& input) {
  std::uint64_t key = instruction_key(instruction);
  for (const Exchange& ex : exchanges_) {
    if (ex.instruction_hash && *ex.instruction_hash == key && ex.input == input) {
      return ex.output;
    }
  }
  for (const Exchange& ex : exchanges_) {
    if (!ex.instruction_hash && ex.input == input) return ex.output;
  }
  if (default_output_) return *default_output_;
  std::string preview = input.substr(0, 120);
  if (input.size() > 120) preview += "...";
  throw MockMissError("no exchange in " + label_ + " for input: \"" + preview + "\"");
}

std::string redacted_header_value(std::string_view name, std::string_view value) {
  if (iequals(name, "authorization") || iequals(name, "x-api-key")) return "***";
  return std::string(value);
}

struct GatewayBackend::InflightGuard {
  GatewayBackend& owner;

  explicit InflightGuard(GatewayBackend& o) : owner(o) {
    std::unique_lock<std::mutex> lock(o.mutex_);
    o.slot_free_.wait(lock, [&o] { return o.inflight_ < o.spec_.inflight_cap; });
    ++o.inflight_;
  }

  ~InflightGuard() {
    {
      std::lock_guard<std::mutex> lock(owner.mutex_);
      --owner.inflight_;
    }
    owner.slot_free_.notify_one();
  }
};

GatewayBackend::GatewayBackend(BackendSpec spec) : spec_(std::move(spec)) {
  if (spec_.inflight_cap == 0) {
    throw std::invalid_argument("gateway inflight_cap must be >= 1");
  }
  std::size_t scheme_end = spec_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("gateway endpoint must be a full URL: " + spec_.endpoint);
  }
  std::size_t path_begin = spec_.endpoint.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) {
    base_url_ = spec_.endpoint;
    path_ = "/";
  } else {
    base_url_ = spec_.endpoint.substr(0, path_begin);
    path_ = spec_.endpoint.substr(path_begin);
  }
}

std::string GatewayBackend::post_once(const std::string& body, int& status_out,
                                      std::string& error_out) {
  httplib::Client client(base_url_);
  time_t sec = static_cast<time_t>(spec_.timeout_ms / 1000);
  time_t usec = static_cast<time_t>((spec_.timeout_ms % 1000) * 1000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  httplib::Headers headers;
  const char* key = std::getenv(spec_.api_key_env.c_str());
  if (key != nullptr && key[0] != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  httplib::Result result = client.Post(path_, headers, body, "application/json");
  if (!result) {
    status_out = 0;
    error_out = httplib::to_string(result.error());
    return {};
  }
  status_out = result->status;
  error_out.clear();
  return result->body;
}

std::string GatewayBackend::extract_text(const std::string& body) const {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) {
    throw GatewayError("gateway returned an unparsable body");
  }
  const nlohmann::json* node = &doc;
  for (const std::string& segment : split_path(spec_.wire.response_text_path)) {
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoull(segment);
      } catch (const std::exception&) {
        throw GatewayError("response path segment \"" + segment + "\" does not index an array");
      }
      if (index >= node->size()) {
        throw GatewayError("response path segment \"" + segment + "\" is out of range");
      }
      node = &(*node)[index];
      continue;
    }
    if (!node->is_object() || !node->contains(segment)) {
      throw GatewayError("response is missing \"" + spec_.wire.response_text_path + "\"");
    }
    node = &node->at(segment);
  }
  if (!node->is_string()) {
    throw GatewayError("response text at \"" + spec_.wire.response_text_path +
                       "\" is not a string");
  }
  return node->get<std::string>();
}

std::string GatewayBackend::complete(const std::string& instruction, const std::string& input) {
  InflightGuard guard(*this);

  nlohmann::ordered_json message_a;
  message_a[spec_.wire.role_field] = spec_.wire.instruction_role;
  message_a[spec_.wire.content_field] = instruction;
  nlohmann::ordered_json message_b;
  message_b[spec_.wire.role_field] = spec_.wire.input_role;
  message_b[spec_.wire.content_field] = input;

  nlohmann::ordered_json body;
  body[spec_.wire.model_field] = spec_.model;
  body[spec_.wire.messages_field] = nlohmann::ordered_json::array({message_a, message_b});
  body[spec_.wire.temperature_field] = spec_.temperature;
  body[spec_.wire.max_tokens_field] = spec_.max_output_tokens;
  std::string payload = body.dump();

  {
    std::string description = "POST " + spec_.endpoint + "\nContent-Type: application/json";
    const char* key = std::getenv(spec_.api_key_env.c_str());
    if (key != nullptr && key[0] != '\0') {
      description += "\nAuthorization: " +
                     redacted_header_value("Authorization", std::string("Bearer ") + key);
    }
    std::lock_guard<std::mutex> lock(mutex_);
    last_request_ = std::move(description);
  }

  std::string last_error = "no attempt made";
  int last_status = 0;
  for (std::size_t attempt = 0; attempt <= spec_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(spec_.backoff_ms << (attempt - 1)));
    }
    int status = 0;
    std::string error;
    std::string response = post_once(payload, status, error);
    if (status == 0) {
      last_error = "transport failure: " + error;
      last_status = 0;
      continue;
    }
    if (status == 429 || status >= 500) {
      last_error = "gateway returned status " + std::to_string(status);
      last_status = status;
      continue;
    }
    if (status < 200 || status >= 300) {
      throw GatewayError("gateway returned status " + std::to_string(status), status);
    }
    return extract_text(response);
  }
  throw GatewayError(last_error + " after " + std::to_string(spec_.retries + 1) + " attempts",
                     last_status);
}

std::string GatewayBackend::describe_last_request() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return last_request_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::string record_path)
    : inner_(std::move(inner)), record_path_(std::move(record_path)) {
  if (!inner_) throw std::invalid_argument("RecordingBackend: null inner backend");
}

std::string RecordingBackend::complete(const std::string& instruction, const std::string& input) {
  std::string output = inner_->complete(instruction, input);
  nlohmann::ordered_json row;
  row["instruction"] = instruction;
  row["input"] = input;
  row["output"] = output;
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(record_path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to record file: " + record_path_);
  out << row.dump() << "\n";
  return output;
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec) {
  switch (spec.kind) {
    case BackendKind::gateway:
      return std::make_shared<GatewayBackend>(spec);
    case BackendKind::mock:
    case BackendKind::oracle:
      return std::make_shared<MockBackend>(spec.resource);
    case BackendKind::template_renderer:
      return nullptr;
  }
  throw std::invalid_argument("unknown backend kind");
}

}  // namespace kgqa
