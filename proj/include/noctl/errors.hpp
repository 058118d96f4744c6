#pragma once

#include <stdexcept>
#include <string>

namespace noctl {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument: length/shape mismatch, invalid specification.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A recorded operation produced a non-finite value or hit a domain violation.
class EvaluationError : public Error {
 public:
  EvaluationError(int node, const std::string& what)
      : Error("node " + std::to_string(node) + ": " + what), node_(node) {}
  int node() const noexcept { return node_; }

 private:
  int node_;
};

// Solver failures: factorization, divergence, line search.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public Error {
 public:
  using Error::Error;
};

class CheckpointShapeError : public Error {
 public:
  using Error::Error;
};

class CheckpointTruncatedError : public Error {
 public:
  using Error::Error;
};

// Configuration validation failure; the message starts with the field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace noctl
