#pragma once

#include <stdexcept>
#include <string>

namespace semclip {

// Error categories map to CLI exit codes: config = 2, data = 3, numeric = 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-level checkpoint failures (bad magic, truncation, version mismatch).
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace semclip
