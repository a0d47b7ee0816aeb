#pragma once

#include <stdexcept>
#include <string>

namespace srclpm {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file content (PGM, dictionary container, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Requested region does not fit the available extent.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// All-zero signal where a normalizable one is required.
class DegenerateBlockError : public Error {
 public:
  using Error::Error;
};

/// Violated numerical contract (column norms, solver certificates).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace srclpm
