#include "ssmsec/common.hpp"

namespace ssmsec {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DiscretizationOverflow: return "discretization-overflow";
    case ErrorKind::GateOverflow: return "gate-overflow";
    case ErrorKind::Encoding: return "encoding";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::GradientOverflow: return "gradient-overflow";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::ResolventSingularity: return "resolvent-singularity";
    case ErrorKind::InvariantViolation: return "invariant-violation";
    case ErrorKind::ZeroThreshold: return "zero-threshold";
    case ErrorKind::UndefinedRatio: return "undefined-ratio";
    case ErrorKind::InfeasibleStealth: return "infeasible-stealth";
    case ErrorKind::InfeasibleEntropy: return "infeasible-entropy";
    case ErrorKind::InapplicableAttack: return "inapplicable-attack";
    case ErrorKind::RecoveryFailure: return "recovery-failure";
    case ErrorKind::SensitivityViolation: return "sensitivity-violation";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

bool all_finite(const RowMat& m) { return m.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }
bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace ssmsec
