#include "frmab/rng.hpp"

#include "frmab/errors.hpp"

namespace frmab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInstance: return "InvalidInstance";
    case ErrorKind::NonPositiveState: return "NonPositiveState";
    case ErrorKind::InfeasibleControl: return "InfeasibleControl";
    case ErrorKind::StateBoundViolation: return "StateBoundViolation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularJacobian: return "SingularJacobian";
    case ErrorKind::RejectedDraw: return "RejectedDraw";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MalformedModel: return "MalformedModel";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool Error::is_numerical() const noexcept {
  switch (kind_) {
    case ErrorKind::StateBoundViolation:
    case ErrorKind::NoConvergence:
    case ErrorKind::SingularJacobian:
    case ErrorKind::TooManyFailures:
    case ErrorKind::DegenerateData:
    case ErrorKind::DivisionByZero:
      return true;
    default:
      return false;
  }
}

std::uint64_t Rng::mix(std::uint64_t z) {
  // SplitMix64 finalizer.
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform_open(double lo, double hi) {
  for (;;) {
    const double u = uniform();
    if (u > 0.0) {
      const double v = lo + (hi - lo) * u;
      if (v > lo && v < hi) return v;
    }
  }
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  for (;;) {
    const std::uint64_t v = next();
    if (v < limit) return v % bound;
  }
}

}  // namespace frmab
