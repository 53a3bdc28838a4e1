#pragma once

#include <stdexcept>
#include <string>

namespace svt {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorCategory { kConfig = 1, kIo = 2, kNumeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

// Shape/extent mismatch between operands. Reported as a configuration error
// since every shape in the model follows from the configuration.
class DimensionError : public ConfigError {
 public:
  explicit DimensionError(const std::string& what) : ConfigError("dimension error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

enum class IoErrorKind { kOpen, kTruncated, kBadMagic, kBadVersion, kSizeMismatch, kWrite };

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what) : Error(ErrorCategory::kIo, what), kind_(kind) {}

  IoErrorKind kind() const noexcept { return kind_; }

 private:
  IoErrorKind kind_;
};

}  // namespace svt
