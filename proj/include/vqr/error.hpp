#pragma once

#include <stdexcept>
#include <string>

namespace vqr {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes do not conform for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a forward value, gradient or optimizer state.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file, config entry or command-line value.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace vqr
