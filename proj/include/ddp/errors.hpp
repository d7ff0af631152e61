#pragma once

#include <stdexcept>
#include <string>

namespace ddp {

/// Invalid or inconsistent configuration: bad values, unknown keys,
/// incompatible checkpoint/config combinations. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem and serialization failures. CLI exit code 3.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structured-file parsing failures; subclasses distinguish the cause so
/// callers and tests can tell a wrong file apart from a damaged one.
class FormatError : public IoError {
public:
  explicit FormatError(const std::string& msg) : IoError(msg) {}
};

/// Leading magic bytes do not identify the expected format.
class BadMagicError : public FormatError {
public:
  explicit BadMagicError(const std::string& msg) : FormatError(msg) {}
};

/// File ends before the declared header or payload is complete.
class TruncatedFileError : public FormatError {
public:
  explicit TruncatedFileError(const std::string& msg) : FormatError(msg) {}
};

/// Header-declared sizes disagree with the actual payload.
class PayloadSizeError : public FormatError {
public:
  explicit PayloadSizeError(const std::string& msg) : FormatError(msg) {}
};

/// Non-finite values where finite math is required (diverged training,
/// invalid numeric input). CLI exit code 4.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Problem instance cannot be attempted (start or goal in collision).
/// CLI exit code 5.
class InfeasibleError : public std::runtime_error {
public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ddp
