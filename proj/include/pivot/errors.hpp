#pragma once

#include <stdexcept>
#include <string>

namespace pivot {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside its documented range (grip command, goal angle, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf appeared in a state, tensor or series.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Tensor, sequence or series dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. The message names the file and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// On-disk artifacts disagree with their manifest, or carry an unsupported version.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace pivot
