#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cursorprof {

// Exception kinds map one-to-one onto CLI exit codes (see tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, config values or format tags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable input or data that violates a contract.
class DataError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class PreconditionError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values or shape mismatches inside numeric code.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A recoverable problem reported alongside a result. line is 1-based, 0 when
// the diagnostic is not tied to an input line.
struct Diagnostic {
  std::size_t line = 0;
  std::string message;
};

using Diagnostics = std::vector<Diagnostic>;

}  // namespace cursorprof
