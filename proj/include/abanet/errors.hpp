#pragma once

#include <stdexcept>
#include <string>

namespace abanet {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A hyperparameter or option is outside its legal range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed or inconsistent (file syntax, ids, spans).
class DataError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite value or degenerate input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace abanet
