#pragma once

#include <stdexcept>
#include <string>

namespace splatspa {

// Base for every error raised by the library. Input/config problems derive
// from InputError so the CLI can map them to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public InputError {
 public:
  using InputError::InputError;
};

class InvalidArgument : public InputError {
 public:
  using InputError::InputError;
};

class InvalidBudget : public InputError {
 public:
  using InputError::InputError;
};

class BudgetInfeasible : public InputError {
 public:
  using InputError::InputError;
};

class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

class UnsupportedFormat : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace splatspa
