#pragma once

#include <stdexcept>
#include <string>

namespace gsmt {

// Shapes or dimensions disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition of an operation was violated (non-scalar loss, label out of
// range, empty span, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid hyperparameter or configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed binary file. Carries the byte offset where validation failed.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A forward pass produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gsmt
