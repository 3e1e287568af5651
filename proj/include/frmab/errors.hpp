#pragma once

#include <stdexcept>
#include <string>

namespace frmab {

enum class ErrorKind {
  InvalidInstance,
  NonPositiveState,
  InfeasibleControl,
  StateBoundViolation,
  NoConvergence,
  SingularJacobian,
  RejectedDraw,
  TooManyFailures,
  DegenerateData,
  DimensionMismatch,
  MalformedModel,
  EmptyDataset,
  DivisionByZero,
  Io,
};

const char* to_string(ErrorKind kind);

// All library failures surface as Error; kind() lets callers (the CLI in
// particular) map them onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // True for failures of the numerics rather than of the inputs.
  bool is_numerical() const noexcept;

 private:
  ErrorKind kind_;
};

}  // namespace frmab
