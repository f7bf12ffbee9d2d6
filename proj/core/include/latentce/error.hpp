#pragma once

#include <stdexcept>
#include <string>

namespace latentce {

// Base of every error raised by the library. Subclasses map one-to-one onto
// the failure classes the CLI and service report.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CorruptCorpusError : public Error {
 public:
  CorruptCorpusError(long long id, const std::string& what);
  long long sample_id() const noexcept { return id_; }

 private:
  long long id_;
};

class OptimizerError : public Error {
 public:
  OptimizerError(std::string parameter, const std::string& what);
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

class TrainingError : public Error {
 public:
  TrainingError(long long step, const std::string& what);
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace latentce
