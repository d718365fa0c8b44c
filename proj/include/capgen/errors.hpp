#pragma once

#include <stdexcept>
#include <string>

namespace capgen {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated caller contract (unnormalized weights, non-scalar backward root...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace capgen
