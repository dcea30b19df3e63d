#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssmsec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Sequences are stored one timestep per row so a step is contiguous in memory.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using cdouble = std::complex<double>;
using CMat = Eigen::MatrixXcd;

enum class ErrorKind {
  InvalidDimension,
  InvalidArgument,
  DiscretizationOverflow,
  GateOverflow,
  Encoding,
  Shape,
  GradientOverflow,
  TrainingDiverged,
  ResolventSingularity,
  InvariantViolation,
  ZeroThreshold,
  UndefinedRatio,
  InfeasibleStealth,
  InfeasibleEntropy,
  InapplicableAttack,
  RecoveryFailure,
  SensitivityViolation,
  InsufficientData,
  Domain,
  Io,
  Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

bool all_finite(const RowMat& m);
bool all_finite(const Mat& m);
bool all_finite(const Vec& v);

}  // namespace ssmsec
