#pragma once

#include <stdexcept>
#include <string>

namespace gqr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A referenced file does not exist or cannot be opened.
class FileNotFoundError : public Error {
 public:
  explicit FileNotFoundError(const std::string& path)
      : Error("file not found: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed input document (manifest, data line, config, fixture).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A structurally valid document that violates a domain invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Model artifact problems: bad magic, version, truncation, checksum.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class NotAModelFileError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

class ChecksumError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

/// Failure of a remote routing backend. Evaluation scores these as Reject.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The backend answered, but not with a configured domain or "other".
class UnparseableVerdictError : public BackendError {
 public:
  explicit UnparseableVerdictError(std::string completion)
      : BackendError("unparseable verdict: \"" + completion + "\""),
        completion_(std::move(completion)) {}
  const std::string& completion() const noexcept { return completion_; }

 private:
  std::string completion_;
};

}  // namespace gqr
