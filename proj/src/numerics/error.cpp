#include "fpt/numerics/error.hpp"

namespace fpt {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::DegenerateScale: return "DegenerateScale";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::MissingWeights: return "MissingWeights";
  }
  return "Unknown";
}

}  // namespace fpt
