#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace perfvox {

enum class ErrorCode {
  Io,
  MalformedHeader,
  UnsupportedDatatype,
  Dimensionality,
  Parse,
  DegenerateInput,
  Config,
  ShapeMismatch,
  Domain,
  EmptySelection,
  NonFinite,
  LengthMismatch,
  MissingVolume,
  BinCoverage,
  UnusableCell,
  InvalidK,
};

std::string_view to_string(ErrorCode code);

// True for errors caused by bad user input (CLI exit code 2) rather than
// failures during processing (exit code 1).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the error-kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace perfvox
