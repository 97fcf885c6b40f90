#pragma once

#include <stdexcept>
#include <string>

namespace polyglot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An argument or record violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input text could not be parsed into the expected structure.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A computation has no defined value for the given input
/// (zero variance, all-degenerate benchmarks, too few rows).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// A regression design matrix is rank deficient.
class SingularDesignError : public Error {
 public:
  using Error::Error;
};

/// Remote endpoint failure: exhausted retries, non-retryable status or a
/// malformed body.
class InferenceError : public Error {
 public:
  InferenceError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// The scored text does not fit into the endpoint's context window.
class TruncationError : public InferenceError {
 public:
  using InferenceError::InferenceError;
};

/// The endpoint cannot return token log-probabilities.
class CapabilityError : public InferenceError {
 public:
  using InferenceError::InferenceError;
};

/// Stage ordering or manifest integrity violation in the orchestrator.
class PipelineError : public Error {
 public:
  using Error::Error;
};

}  // namespace polyglot
