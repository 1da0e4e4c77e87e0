#pragma once

#include <stdexcept>
#include <string>

namespace erasure {

// Mirrors the process exit codes used by the CLI.
enum class ErrorKind {
  Usage = 2,
  Data = 3,
  Numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::Numeric, what) {}
};

// Raised by projection_ratio when ||b||^2 falls below the threshold.
class DegenerateReference : public NumericError {
 public:
  explicit DegenerateReference(const std::string& what) : NumericError(what) {}
};

}  // namespace erasure
