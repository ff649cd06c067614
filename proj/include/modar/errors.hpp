#pragma once

#include <stdexcept>
#include <string>

namespace modar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonPlanarRotation : public Error {
 public:
  using Error::Error;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class MalformedFile : public Error {
 public:
  using Error::Error;
};

class MissingFrame : public Error {
 public:
  using Error::Error;
};

class EmptyClass : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnknownScenario : public Error {
 public:
  using Error::Error;
};

class ClassMismatch : public Error {
 public:
  using Error::Error;
};

class NoHistory : public Error {
 public:
  using Error::Error;
};

class MissingWaypoint : public Error {
 public:
  using Error::Error;
};

class EmptyGroundTruth : public Error {
 public:
  using Error::Error;
};

class NoGroundTruth : public Error {
 public:
  using Error::Error;
};

/// Wraps an error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace modar
