#pragma once

#include <stdexcept>
#include <string>

namespace mixlab {

// Error taxonomy. Structural violations (bad kernels, broken invariants)
// and resource guards all surface as Error with a machine-readable kind.
enum class ErrorKind {
  RowSum,
  NotIrreducible,
  NotAperiodic,
  NotReversible,
  LengthMismatch,
  Diverged,
  TooLarge,
  DegenerateSpectrum,
  ConstantVector,
  InvalidPath,
  WeightSum,
  LPNumericFailure,
  KLViolation,
  CheegerViolation,
  StateSpaceTooLarge,
  EmptyStateSpace,
  NotApplicable,
  NoBuiltinCoupling,
  NotFaithful,
  NoContraction,
  NoGeodesic,
  DistanceJumpViolation,
  TooManyItems,
  NoBalancedPermutation,
  InfeasiblePath,
  DecodeMismatch,
  Parse,
  InvalidArgument,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::RowSum: return "RowSumError";
    case ErrorKind::NotIrreducible: return "NotIrreducible";
    case ErrorKind::NotAperiodic: return "NotAperiodic";
    case ErrorKind::NotReversible: return "NotReversible";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorKind::ConstantVector: return "ConstantVector";
    case ErrorKind::InvalidPath: return "InvalidPath";
    case ErrorKind::WeightSum: return "WeightSumError";
    case ErrorKind::LPNumericFailure: return "LPNumericFailure";
    case ErrorKind::KLViolation: return "KLViolation";
    case ErrorKind::CheegerViolation: return "CheegerViolation";
    case ErrorKind::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorKind::EmptyStateSpace: return "EmptyStateSpace";
    case ErrorKind::NotApplicable: return "NotApplicable";
    case ErrorKind::NoBuiltinCoupling: return "NoBuiltinCoupling";
    case ErrorKind::NotFaithful: return "NotFaithful";
    case ErrorKind::NoContraction: return "NoContraction";
    case ErrorKind::NoGeodesic: return "NoGeodesic";
    case ErrorKind::DistanceJumpViolation: return "DistanceJumpViolation";
    case ErrorKind::TooManyItems: return "TooManyItems";
    case ErrorKind::NoBalancedPermutation: return "NoBalancedPermutation";
    case ErrorKind::InfeasiblePath: return "InfeasiblePath";
    case ErrorKind::DecodeMismatch: return "DecodeMismatch";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace mixlab
