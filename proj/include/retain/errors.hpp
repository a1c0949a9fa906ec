// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace retain {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument violates an operation precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A result failed a self-consistency check.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (JSON, JSONL, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A metric is not defined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace retain
