#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/ssm.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ssmsec {

struct GainProfile {
  std::vector<double> freqs;
  std::vector<double> gains;  // operator norm of the transfer matrix per frequency
  double omega_star = 0.0;
  double hinf = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double gamma = 0.0;  // mean + 2 * stddev

  std::string to_csv() const;
  std::string summary_json() const;
};

inline constexpr int kDefaultGridSize = 4096;

// H(w) = C (I - A e^{-jw})^{-1} B + D, the frequency response of lti_scan.
// Its strictly proper part has the same magnitude as C (e^{jw} I - A)^{-1} B.
CMat transfer_gain(const DiscreteSsm& sys, double omega);
double spectral_norm(const CMat& m);

using TransferFn = std::function<CMat(double omega)>;
// Gain on a uniform grid over [0, pi]; every local maximum of the grid is
// refined by golden-section search to 1e-6 rad.
GainProfile gain_profile(const TransferFn& h, int grid_size = kDefaultGridSize);
GainProfile gain_profile(const DiscreteSsm& sys, int grid_size = kDefaultGridSize);

using SequenceOracle = std::function<RowMat(const RowMat& u)>;

// Drives `oracle` with amplitude * cos(w t) on input channel `in_ch` and fits
// cos/sin components of output channel `out_ch` by least squares after
// discarding the first T/4 samples.
GainProfile spectral_probe(const SequenceOracle& oracle, const std::vector<double>& freqs, double amplitude, int steps,
                           int d_in = 1, int in_ch = 0, int out_ch = 0);

RowMat spectral_perturbation(double omega, double epsilon, int steps, int d, double phase = 0.0);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double tight_ratio = 0.0;
};

// ||dY||_2 <= hinf * ||dU||_2 for the zero-state response to dU.
BoundCheck verify_spectral_bound(const DiscreteSsm& sys, const RowMat& du, double hinf);
BoundCheck verify_spectral_bound(const DiscreteSsm& sys, const RowMat& du);

// Mean of the per-step frozen transfer functions of a selective layer along u0.
GainProfile linearized_gain(const SelectiveSsm& sys, const RowMat& u0, int grid_size = kDefaultGridSize);

}  // namespace ssmsec
