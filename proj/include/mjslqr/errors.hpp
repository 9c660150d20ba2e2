#pragma once

#include <stdexcept>
#include <string>

namespace mjslqr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad probability vector,
/// negative noise level, empty sequence, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NotErgodic : public Error {
 public:
  using Error::Error;
};

class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap or produced non-finite values.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

class NotPsd : public Error {
 public:
  using Error::Error;
};

class InvalidDecayPair : public Error {
 public:
  using Error::Error;
};

class SingularInnerSolve : public Error {
 public:
  using Error::Error;
};

class NotMss : public Error {
 public:
  using Error::Error;
};

class DegenerateRegressors : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline void require_shape(bool condition, const std::string& message) {
  if (!condition) throw ShapeMismatch(message);
}

}  // namespace detail
}  // namespace mjslqr
