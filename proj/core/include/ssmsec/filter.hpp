#pragma once

#include "ssmsec/common.hpp"

#include <vector>

namespace ssmsec {

struct BandstopSpec {
  double center = 0.0;          // omega*, rad/step
  double half_bandwidth = 0.1;  // delta omega
  int order = 4;
  double threshold = 0.0;       // gamma used to select the band; informational

  void validate() const;
};

// Second-order section in direct form II transposed: b0 b1 b2 / 1 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Digital Butterworth bandstop for [center - bw, center + bw] via bilinear transform with
// prewarped edges. A band reaching 0 becomes a highpass, a band reaching pi a lowpass.
std::vector<Biquad> design_bandstop(const BandstopSpec& spec);
cdouble sos_response(const std::vector<Biquad>& sos, double omega);

// One causal pass with steady-state initial conditions matched to the first sample.
Vec sos_filter(const std::vector<Biquad>& sos, const Vec& x);
// Zero-phase forward-backward filtering with odd-reflection padding, per column.
RowMat filtfilt(const std::vector<Biquad>& sos, const RowMat& u);

RowMat bandstop_filter(const RowMat& u, const BandstopSpec& spec);

}  // namespace ssmsec
