#pragma once

#include <stdexcept>
#include <string>

namespace fallpred {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix dimensions or non-finite numeric input.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed keypoint, annotation or model document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (model/config mismatch, bad hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API called out of order, e.g. backward before forward.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Precondition on data content violated (empty set, single class, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fallpred
