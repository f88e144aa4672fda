#include "perfvox/error.hpp"

namespace perfvox {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::Dimensionality: return "DimensionalityError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Domain: return "DomainError";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingVolume: return "MissingVolume";
    case ErrorCode::BinCoverage: return "BinCoverageError";
    case ErrorCode::UnusableCell: return "UnusableCell";
    case ErrorCode::InvalidK: return "InvalidK";
  }
  return "Error";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse:
    case ErrorCode::Config:
    case ErrorCode::Domain:
    case ErrorCode::InvalidK:
    case ErrorCode::BinCoverage:
      return true;
    default:
      return false;
  }
}

}  // namespace perfvox
