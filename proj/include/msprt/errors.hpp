#pragma once

#include <stdexcept>
#include <string>

namespace msprt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A covariance matrix failed Cholesky factorization even after the ridge retry.
class FactorizationError : public Error {
 public:
  FactorizationError(std::string matrix_label, const std::string& detail)
      : Error("factorization failed for " + matrix_label + ": " + detail),
        label_(std::move(matrix_label)) {}

  const std::string& matrix_label() const noexcept { return label_; }

 private:
  std::string label_;
};

class InvalidScaleError : public Error {
 public:
  using Error::Error;
};

/// The statistics do not yet support an estimate (zero proportions, zero
/// variance, too few observations). Callers treat this as "defer and keep
/// ingesting", not as a failure.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Bad observation: arm out of range, non-binary value for a binary metric,
/// non-finite value.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class CorruptSnapshotError : public Error {
 public:
  using Error::Error;
};

}  // namespace msprt
