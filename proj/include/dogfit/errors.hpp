#pragma once

#include <stdexcept>
#include <string>

namespace dogfit {

// Base for all library errors. The CLI maps ValidationError-derived failures to
// exit status 1 and NumericalError-derived failures to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateAnnotation : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BehindCamera : public NumericalError {
 public:
  explicit BehindCamera(std::size_t index)
      : NumericalError("point " + std::to_string(index) + " is at or behind the camera plane"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class PoisonedValue : public NumericalError {
 public:
  PoisonedValue(std::string op, double value)
      : NumericalError("non-finite value " + std::to_string(value) + " produced by '" + op + "'"),
        op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class NumericalDegeneracy : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace dogfit
