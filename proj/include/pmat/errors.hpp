#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmat {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad dimensions, out-of-range hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid call-site input: label out of range, length mismatch, empty data.
class InputError : public Error {
 public:
  using Error::Error;
};

// Label or feature count disagrees with the declared schema.
class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

// Non-finite value encountered during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Checkpoint that cannot be restored.
class LoadError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace pmat
