#pragma once

#include <stdexcept>
#include <string>

namespace gscvol {

// Exit-code classes used by the CLI: usage/config problems map to 1, bad input
// data to 2, numerical failures to 3.

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gscvol
