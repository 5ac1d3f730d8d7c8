#pragma once

#include <stdexcept>
#include <string>

namespace granenc {

// Root of every exception thrown by the library. The CLI maps subclasses to
// exit codes, so new error kinds should derive from the closest category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input bytes (JSON, text files, checkpoints).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that is missing required fields or has the wrong types.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Parallel inputs that disagree in count or length.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Content that violates a domain rule (e.g. ill-formed BIO).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Label or class id outside the label space.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Predictions do not cover every gold question.
class CoverageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Two components disagree about a shared dimension or length.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace granenc
