#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgqa {

// Structured input (kb file, template registry, qa file, projection file)
// could not be parsed. line_no is 1-based.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& message, std::size_t line_no)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + message),
        line_no_(line_no) {}

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

// An EntityId or RelationId outside the interned range was used.
class InvalidIdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decomposition output had no parseable step list.
class PlanParseError : public std::runtime_error {
 public:
  PlanParseError(const std::string& message, std::size_t byte_offset)
      : std::runtime_error(message + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// A parsed plan violated a structural rule; rule() names the rule.
class PlanInvalidError : public std::runtime_error {
 public:
  PlanInvalidError(std::string rule, const std::string& message)
      : std::runtime_error(message + " [" + rule + "]"), rule_(std::move(rule)) {}

  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

// Both decomposition attempts produced unusable output.
class DecompositionFailedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A plan step was executed before one of its dependencies.
class SchedulingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport or protocol failure talking to a model endpoint, after retries.
// status() is the HTTP status, or 0 for transport-level failures.
class GatewayError : public std::runtime_error {
 public:
  explicit GatewayError(const std::string& message, int status = 0)
      : std::runtime_error(message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

// A mock backend received a request it has no scripted reply for.
// Signals a test bug, never handled as a model failure.
class MockMissError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kgqa
