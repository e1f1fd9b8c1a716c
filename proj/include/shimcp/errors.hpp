#pragma once

#include <stdexcept>
#include <string>

namespace shimcp {

// Broad failure class, mapped to process exit codes by the CLI.
enum class ErrorKind {
  Config,   // inconsistent flags / invalid parameters
  Data,     // malformed input data or schema violations
  Numeric,  // singularities, iteration limits, exceeded budgets
  Audit,    // oracle disagreement
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class InvalidPatternError : public Error {
public:
  explicit InvalidPatternError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class SchemaError : public Error {
public:
  explicit SchemaError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// An explicit expansion would exceed the configured cap.
class SizeError : public Error {
public:
  explicit SizeError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class SingularityError : public Error {
public:
  explicit SingularityError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class AuditError : public Error {
public:
  explicit AuditError(const std::string& what) : Error(ErrorKind::Audit, what) {}
};

}  // namespace shimcp
