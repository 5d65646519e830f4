// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace spikacom {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced or received a non-finite or singular quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or precondition violation.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment configuration. Carries the field path that failed.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// File or stream failure; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spikacom
