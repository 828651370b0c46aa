#pragma once

#include <stdexcept>
#include <string>

namespace bbsi {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input data too degenerate to define the requested object.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Evaluation point outside the range covered by a grid.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E = DomainError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace detail
}  // namespace bbsi
