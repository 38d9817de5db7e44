#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpt {

enum class ErrorKind {
  InvalidInput,
  ShapeError,
  NumericalFailure,
  FormatError,
  InsufficientData,
  IoError,
  DegenerateScale,
  RankDeficient,
  MissingWeights,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the ErrorKind tags so
/// callers (and the CLI exit-code mapping) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace fpt
