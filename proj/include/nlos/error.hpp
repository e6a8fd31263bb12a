#pragma once

#include <stdexcept>
#include <string>

namespace nlos {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind {
  Usage = 1,    // bad flags, bad config values, contract violations by the caller
  Data = 2,     // malformed or insufficient input data
  Numeric = 3,  // singular geometry, divergence, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

}  // namespace nlos
