#pragma once

#include <stdexcept>
#include <string>

namespace lcm {

// Base for every error raised by the library. Categories map onto CLI exit
// codes: validation problems exit 1, numerical failures exit 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched tensor extents between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Geometry that yields an empty output (e.g. kernel larger than padded input).
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an API call.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or divergence during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed persisted data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace lcm
