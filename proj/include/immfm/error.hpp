// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace immfm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or vector extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed input file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input that parses but does not fit the expected layout.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Non-finite values produced during training or simulation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace immfm
