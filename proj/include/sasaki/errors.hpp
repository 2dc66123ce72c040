#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sasaki {

enum class ErrorKind {
  NonPositiveMetric,
  GridTooCoarse,
  SingularMetric,
  VectorNotInD,
  NonPositiveParameter,
  DegreeOverflow,
  DegreeUnderflow,
  NonPeriodicChart,
  SolverDiverged,
  IncompatibleClass,
  MetricDegenerated,
  StepRejected,
  LowerBoundViolated,
  InsufficientCheckpoints,
  ConstraintUnsatisfiable,
  MaxIterations,
  NegativeMinimizer,
  NonPositiveTau,
  TrajectoryGap,
  NegativeEvolution,
  ShootingNoConverge,
  ZeroVector,
  FrameDegenerate,
  ConfigInvalid,
  RunFailed,
  SchemaMismatch,
};

inline std::string_view error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonPositiveMetric: return "NonPositiveMetric";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::SingularMetric: return "SingularMetric";
    case ErrorKind::VectorNotInD: return "VectorNotInD";
    case ErrorKind::NonPositiveParameter: return "NonPositiveParameter";
    case ErrorKind::DegreeOverflow: return "DegreeOverflow";
    case ErrorKind::DegreeUnderflow: return "DegreeUnderflow";
    case ErrorKind::NonPeriodicChart: return "NonPeriodicChart";
    case ErrorKind::SolverDiverged: return "SolverDiverged";
    case ErrorKind::IncompatibleClass: return "IncompatibleClass";
    case ErrorKind::MetricDegenerated: return "MetricDegenerated";
    case ErrorKind::StepRejected: return "StepRejected";
    case ErrorKind::LowerBoundViolated: return "LowerBoundViolated";
    case ErrorKind::InsufficientCheckpoints: return "InsufficientCheckpoints";
    case ErrorKind::ConstraintUnsatisfiable: return "ConstraintUnsatisfiable";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::NegativeMinimizer: return "NegativeMinimizer";
    case ErrorKind::NonPositiveTau: return "NonPositiveTau";
    case ErrorKind::TrajectoryGap: return "TrajectoryGap";
    case ErrorKind::NegativeEvolution: return "NegativeEvolution";
    case ErrorKind::ShootingNoConverge: return "ShootingNoConverge";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::FrameDegenerate: return "FrameDegenerate";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::RunFailed: return "RunFailed";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(error_name(kind)) + ": " + detail), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Carries the dt the caller should retry with.
class StepRejectedError : public Error {
 public:
  StepRejectedError(const std::string& detail, double suggested)
      : Error(ErrorKind::StepRejected, detail), suggested_dt(suggested) {}
  double suggested_dt;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace sasaki
