#pragma once

#include <stdexcept>
#include <string>

namespace advcheck {

// Precondition violated by the caller (bad shape, bad label, bad option).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The attack needs an access level the model does not offer.
class AttackInapplicable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A hard-label attack found no adversarial starting point.
class InitFailure : public AttackInapplicable {
 public:
  using AttackInapplicable::AttackInapplicable;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Unbounded minimum-distortion search never found an adversarial input.
class UnboundedFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content. `offset` is the byte offset of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advcheck
