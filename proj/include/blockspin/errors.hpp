#pragma once

#include <stdexcept>
#include <string>

namespace blockspin {

// Error identities named in the module contracts. Validation failures map to
// CLI exit code 2, numerical non-convergence to exit code 3.
enum class Errc {
  AsymmetricMatrix,
  NotPositiveDefinite,
  EmptyBlock,
  BadBlockScaling,
  EigSolverFailure,
  TooLarge,
  DomainError,
  NoConvergence,
  NotHighTemperature,
  NotCritical,
  NonSimpleTopEigenvalue,
  NotUniform,
  NotInvertible,
  InsufficientSamples,
  NotACriticalPoint,
  QuadratureNonConvergence,
  InvalidArgument,
  ParseError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::AsymmetricMatrix: return "AsymmetricMatrix";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::EmptyBlock: return "EmptyBlock";
    case Errc::BadBlockScaling: return "BadBlockScaling";
    case Errc::EigSolverFailure: return "EigSolverFailure";
    case Errc::TooLarge: return "TooLarge";
    case Errc::DomainError: return "DomainError";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::NotHighTemperature: return "NotHighTemperature";
    case Errc::NotCritical: return "NotCritical";
    case Errc::NonSimpleTopEigenvalue: return "NonSimpleTopEigenvalue";
    case Errc::NotUniform: return "NotUniform";
    case Errc::NotInvertible: return "NotInvertible";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NotACriticalPoint: return "NotACriticalPoint";
    case Errc::QuadratureNonConvergence: return "QuadratureNonConvergence";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

// True for errors caused by bad inputs rather than failed numerics.
inline bool errc_is_validation(Errc c) {
  switch (c) {
    case Errc::EigSolverFailure:
    case Errc::NoConvergence:
    case Errc::QuadratureNonConvergence:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  bool is_validation() const noexcept { return errc_is_validation(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace blockspin
