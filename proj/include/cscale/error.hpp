#pragma once

#include <stdexcept>
#include <string>

namespace cscale {

// Base error. `category()` is stable and machine-parsable; the CLI prints
// errors as "cscale-error: <category>: <message>" on a single line.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

private:
  std::string category_;
};

// Tensor/layer shape incompatibilities.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

// Violated operation precondition (values out of range, bad labels, ...).
class ContractError : public Error {
public:
  explicit ContractError(const std::string& message) : Error("contract", message) {}
};

// Invalid run configuration; message carries the offending field path.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// Malformed or incompatible serialized files (magic, version, checksum).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& message) : Error("format", message) {}
};

// Filesystem failures.
class IoError : public Error {
public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

// Operation called in an invalid state (empty tape, missing split, ...).
class StateError : public Error {
public:
  explicit StateError(const std::string& message) : Error("state", message) {}
};

}  // namespace cscale
