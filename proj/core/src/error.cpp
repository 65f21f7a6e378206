#include "carnotgeo/error.hpp"

namespace carnot {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidStratification: return "InvalidStratification";
    case ErrorCode::UnsupportedStep: return "UnsupportedStep";
    case ErrorCode::NegativeDilation: return "NegativeDilation";
    case ErrorCode::UnsupportedNormForGroup: return "UnsupportedNormForGroup";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonDifferentiable: return "NonDifferentiable";
    case ErrorCode::DegenerateDefiningFunction: return "DegenerateDefiningFunction";
    case ErrorCode::CharacteristicPoint: return "CharacteristicPoint";
    case ErrorCode::ChartExtractionFailed: return "ChartExtractionFailed";
    case ErrorCode::EmptyActiveSet: return "EmptyActiveSet";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::DegenerateSlicing: return "DegenerateSlicing";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::NoCurvatureLowerBound: return "NoCurvatureLowerBound";
    case ErrorCode::NotClosedSurface: return "NotClosedSurface";
    case ErrorCode::NotUNC: return "NotUNC";
    case ErrorCode::RadiusTooLarge: return "RadiusTooLarge";
    case ErrorCode::HypothesisFailure: return "HypothesisFailure";
    case ErrorCode::TooFewRadii: return "TooFewRadii";
    case ErrorCode::InvalidAlgebra: return "InvalidAlgebra";
    case ErrorCode::InvalidInput: return "InvalidInput";
  }
  return "Unknown";
}

}  // namespace carnot
