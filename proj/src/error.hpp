#pragma once

#include <stdexcept>
#include <string>

namespace rmae {

// Error categories, kept in sync with the rmae_status codes of the C API.
enum class ErrorKind {
  InvalidArg,   // bad argument, shape mismatch, contract violation
  Io,           // unreadable/unwritable file
  Format,       // malformed file content (wrong magic, bad record, ...)
  Config,       // invalid configuration value
  Incompatible, // checkpoint/config/vocab mismatch
  Numeric,      // NaN/Inf where finite values are required
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorKind::InvalidArg, m) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(ErrorKind::InvalidArg, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorKind::Format, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct CompatError : Error {
  explicit CompatError(const std::string& m) : Error(ErrorKind::Incompatible, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};

}  // namespace rmae
