#pragma once

#include <stdexcept>
#include <string>

namespace mmpd {

// Invalid configuration values or schedule references.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: stepping a terminal state, dimension mismatches, bad arguments.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during training; carries diagnostics.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failures (missing file, write errors).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

// Unsupported format_version in a file.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace mmpd
