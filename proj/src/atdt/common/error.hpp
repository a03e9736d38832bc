#pragma once

#include <stdexcept>
#include <string>

namespace atdt {

// Violation of an operation's documented pre/postcondition (shape mismatch,
// out-of-range label, non-scalar backward seed, ...).
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent user configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A training loop hit a non-finite loss or gradient and stopped. The last
// good checkpoint, if any was written, is named so callers can recover.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& msg, std::string last_good_checkpoint)
      : std::runtime_error(msg), last_good_checkpoint_(std::move(last_good_checkpoint)) {}
  const std::string& last_good_checkpoint() const { return last_good_checkpoint_; }

 private:
  std::string last_good_checkpoint_;
};

}  // namespace atdt
