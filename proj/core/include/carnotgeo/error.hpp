#pragma once

#include <stdexcept>
#include <string>

namespace carnot {

enum class ErrorCode {
  IndexOutOfRange,
  InvalidStratification,
  UnsupportedStep,
  NegativeDilation,
  UnsupportedNormForGroup,
  SyntaxError,
  UnknownIdentifier,
  ArityError,
  DomainError,
  NonDifferentiable,
  DegenerateDefiningFunction,
  CharacteristicPoint,
  ChartExtractionFailed,
  EmptyActiveSet,
  SolverFailure,
  DegenerateSlicing,
  NoCandidates,
  NoCurvatureLowerBound,
  NotClosedSurface,
  NotUNC,
  RadiusTooLarge,
  HypothesisFailure,
  TooFewRadii,
  InvalidAlgebra,
  InvalidInput,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg, long offset = -1)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code),
        offset_(offset) {}

  ErrorCode code() const noexcept { return code_; }
  // byte offset into the source text for SyntaxError, -1 otherwise
  long offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  long offset_;
};

}  // namespace carnot
