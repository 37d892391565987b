#pragma once

#include <stdexcept>
#include <string>

namespace bidrn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up (names both shapes where possible).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or non-chaining network/layer configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (e.g. backward from a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bidrn
