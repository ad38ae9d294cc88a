#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtrack {

// Precondition or shape contract broken by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value inside an iterative solver or training loop.
class SolverDivergence : public std::runtime_error {
 public:
  SolverDivergence(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Malformed or inconsistent on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A region sampled entirely outside a feature map.
class OutOfSupport : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EstimationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dtrack
