#pragma once

#include <stdexcept>
#include <string>

namespace pickt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or argument is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, id out of vocabulary).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input files are missing, malformed or referentially inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, failed gradient check, diverged optimisation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace pickt
