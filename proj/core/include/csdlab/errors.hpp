#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace csdlab {

/// Argument outside an operation's mathematical domain (bad t, dimension mismatch).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unknown prompt label or camera index.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Inconsistent or invalid experiment/rule configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked on an object in an unusable state (e.g. fitting an empty window).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Parameters became non-finite during optimization.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(std::int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace csdlab
