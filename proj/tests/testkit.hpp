#pragma once

// Shared fixtures and property suites. The unit tests run them at reduced
// counts; the acceptance binary runs them at full size.

#include "ssmsec/model.hpp"
#include "ssmsec/rng.hpp"
#include "ssmsec/ssm.hpp"

#include <cstdint>

namespace ssmsec::testkit {

// Stable diagonal system with n states (complex pairs allowed when `pairs`), d inputs/outputs.
DiscreteSsm random_stable_system(Rng& rng, int n, int d, bool pairs, double max_radius = 0.95);
RowMat random_sequence(Rng& rng, int steps, int d, double scale = 1.0);
// Small model (<= a few hundred parameters) with a random mix of layer kinds and options.
StackedModel random_small_model(Rng& rng, bool tokens);

struct DualityResult {
  int systems = 0;
  double max_abs_error = 0.0;
};
// Compares lti_scan against conv_apply(conv_kernel) on random systems with N <= 8, T <= 256.
DualityResult scan_conv_duality(int systems, std::uint64_t seed);

struct SpectralSuite {
  int pairs = 0;
  int violations = 0;
  double worst_ratio = 0.0;          // max lhs / rhs over random pairs
  double min_tightness = 1.0;        // sinusoid at omega*, T = 4096
  double max_probe_error = 0.0;      // |probe - transfer gain| / transfer gain
};
SpectralSuite spectral_suite(int pairs, int tightness_systems, int probe_systems, std::uint64_t seed);

struct GradientSuite {
  int cases = 0;
  int max_params = 0;
  double worst_param_error = 0.0;  // relative l2 error against central differences
  double worst_input_error = 0.0;
};
GradientSuite gradient_suite(int cases, std::uint64_t seed);

struct StatsSuite {
  int wilson_covered = 0;  // out of 1000
  double null_p_frac_below_005 = 0.0;
  double null_p_frac_below_010 = 0.0;
  bool holm_example = false;
};
StatsSuite stats_suite(std::uint64_t seed, int null_trials = 400);

}  // namespace ssmsec::testkit
