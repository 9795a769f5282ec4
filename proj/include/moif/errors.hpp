#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moif {

/// Root of every error thrown by the library. The CLI maps subclasses onto
/// exit codes: validation errors exit with 1, runtime/numeric failures with 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_validation() const { return true; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's pre-condition (wrong mode, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
  bool is_validation() const override { return false; }
};

/// Non-finite value produced by a forward op or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
  bool is_validation() const override { return false; }
};

/// Checkpoint load failures. The kind distinguishes the failure modes.
class CheckpointError : public Error {
 public:
  enum class Kind { kVersion, kManifest, kShape, kTruncated, kFormat };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace moif
