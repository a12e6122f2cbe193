#pragma once

#include <stdexcept>
#include <string>

namespace flab {

// Base class for all toolkit errors. Subclasses carry the failure category;
// the CLI maps categories to stable exit codes.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

// Malformed input file (JSONL record, CSV header, checkpoint container).
class SchemaError : public Error {
  public:
    explicit SchemaError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

// --- model ---
class SequenceTooLong : public Error {
  public:
    using Error::Error;
};
class InvalidToken : public Error {
  public:
    using Error::Error;
};
class ShapeMismatch : public Error {
  public:
    using Error::Error;
};
class EmptyCandidate : public Error {
  public:
    using Error::Error;
};

// --- training ---
class NonFiniteGradient : public Error {
  public:
    using Error::Error;
};

// --- diagnostics ---
class ZeroMatrix : public Error {
  public:
    using Error::Error;
};
class DegenerateBatch : public Error {
  public:
    using Error::Error;
};
class ChecksumMismatch : public SchemaError {
  public:
    explicit ChecksumMismatch(const std::string& msg) : SchemaError(msg) {}
};

// --- metrics ---
class EmptyReference : public Error {
  public:
    using Error::Error;
};
class EmptyGold : public Error {
  public:
    using Error::Error;
};

// --- tasks ---
class InsufficientValueSpace : public Error {
  public:
    using Error::Error;
};
class TemplateMismatch : public Error {
  public:
    using Error::Error;
};

// --- analysis ---
class ConstantInput : public Error {
  public:
    using Error::Error;
};
class LengthMismatch : public Error {
  public:
    using Error::Error;
};
class TooFewPoints : public Error {
  public:
    using Error::Error;
};

} // namespace flab
