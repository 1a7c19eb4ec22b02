#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace omega {

// Two families: ValidationError means the caller asked for something
// ill-formed (the CLI exits 1); RuntimeError means valid input failed
// during execution (exit 2).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DivisibilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientDataError : public ValidationError {
 public:
  InsufficientDataError(const std::string& what, std::size_t required)
      : ValidationError(what), required_(required) {}
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t required_;
};

class RateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SpecError : public ValidationError {
 public:
  SpecError(const std::string& field, const std::string& what)
      : ValidationError(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NumericError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class DegenerateBatchError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class UnknownNodeError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class IoError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class ParseError : public RuntimeError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : RuntimeError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptySeriesError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class FormatError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class CorruptionError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class VersionError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class DivergenceError : public RuntimeError {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : RuntimeError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace omega
