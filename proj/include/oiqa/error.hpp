#pragma once

#include <stdexcept>
#include <string>

namespace oiqa {

/// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration (k >= V, bad head count, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Unusable input data (empty image, missing file, empty manifest).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the given data (zero variance, all ties).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace oiqa
