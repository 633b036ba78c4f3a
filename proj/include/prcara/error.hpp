#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace prcara {

/// Base for every error raised by the library. The CLI maps subclasses onto
/// process exit codes (see tools/prcara_main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// A selection window that reaches beyond the grid horizon.
class HorizonExceeded : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  EncodeError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Recording RSSI in a subframe in which the owner itself transmitted.
class HalfDuplexViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Vehicles cannot be placed as configured.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

class UndefinedMetrics : public Error {
 public:
  using Error::Error;
};

/// Internal consistency check failed; always a bug.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ReplicaFailure : public Error {
 public:
  ReplicaFailure(std::uint64_t seed, const std::string& what)
      : Error("replica seed " + std::to_string(seed) + ": " + what), seed_(seed) {}
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace prcara
