#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prbm {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A domain value violates its invariants. `field()` names the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// An operation argument is out of its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The logarithmic-decrement chain cannot be evaluated on this input.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class InsufficientPeaksError : public EstimationError {
 public:
  explicit InsufficientPeaksError(std::size_t found)
      : EstimationError("need at least 2 peaks, found " + std::to_string(found)),
        found_(found) {}
  std::size_t found() const noexcept { return found_; }

 private:
  std::size_t found_;
};

class NegativeDecrementError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class OverdampedError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class DegenerateFitError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// Integrator produced a non-finite state.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Closed loop left the admissible angle envelope.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// Trace or config file could not be read or parsed. `row()` is 1-based, 0 when not applicable.
class FileError : public Error {
 public:
  FileError(std::string path, const std::string& what, std::size_t row = 0)
      : Error(path + (row ? ":" + std::to_string(row) : std::string()) + ": " + what),
        path_(std::move(path)),
        row_(row) {}
  const std::string& path() const noexcept { return path_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::string path_;
  std::size_t row_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace prbm
