#pragma once

#include <stdexcept>
#include <string>

namespace kdasc {

// Root of every exception thrown by the library. Catch this to handle all
// toolkit failures uniformly; catch the subclasses to react to one kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input validation: values outside their documented domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DuplicateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Filterbank or model construction produced an unusable object.
class ConstructionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AuditError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed file contents (bad RIFF header, bad magic, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedCodecError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptionError : public CheckpointError {
 public:
  CorruptionError(const std::string& what, std::size_t offset)
      : CheckpointError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class SpecMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// A required upstream artifact (features, checkpoint, embeddings) is absent.
class MissingPrerequisiteError : public Error {
 public:
  using Error::Error;
};

// Training hit a non-finite value. Carries layer/step diagnostics in what().
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace kdasc
