#pragma once

#include <stdexcept>
#include <string>

namespace advinfer {

// Root of every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, dimensions or configuration values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// NaN / Inf detected in a value or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace advinfer
