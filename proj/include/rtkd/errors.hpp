#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rtkd {

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int {
  kUsage = 1,
  kFormat = 2,
  kValidation = 3,
  kNumeric = 4,
};

std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error(ErrorCategory::kUsage, message) {}
};

/// Malformed or truncated files and I/O failures.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorCategory::kFormat, message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorCategory::kValidation, message) {}
};

/// Shape mismatches between operands.
class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& message) : ValidationError(message) {}
};

/// Arguments outside an operation's domain (bad extents, degenerate boxes, ...).
class DomainError : public ValidationError {
 public:
  explicit DomainError(const std::string& message) : ValidationError(message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorCategory::kNumeric, message) {}
};

}  // namespace rtkd
