#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace brgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyGraphError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Raised when an operation produces NaN or Inf; the message names the op.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingExhaustedError : public Error {
 public:
  using Error::Error;
};

/// Training diverged. Carries the epoch and the first offending parameter.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, std::string parameter, const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) + " (parameter '" + parameter +
              "'): " + detail),
        epoch_(epoch),
        parameter_(std::move(parameter)) {}

  std::size_t epoch() const { return epoch_; }
  const std::string& parameter() const { return parameter_; }

 private:
  std::size_t epoch_;
  std::string parameter_;
};

}  // namespace brgcn
