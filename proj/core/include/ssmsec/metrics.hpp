#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/ssm.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ssmsec {

struct StivResult {
  double value = 0.0;
  std::vector<int> corrupted_steps;
  double tau = 0.0;
  std::string tau_rule;
};

struct AmplificationResult {
  double ratio = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  std::size_t n_samples = 0;
  bool critically_amplifying = false;
};

struct RatioResult {
  double rho = 0.0;
  double adv_mean = 0.0;
  double rand_mean = 0.0;
  bool suppressed = false;  // random mean is zero; rho reported as 1 by convention
};

inline constexpr double kDefaultTauFraction = 0.1;

StivResult stiv(const StateTrajectory& clean, const StateTrajectory& adv, double tau, const std::string& rule = "absolute");
double tau_from_trajectory(const StateTrajectory& clean, double fraction = kDefaultTauFraction);
// Per-layer StIV with per-layer tau_l = fraction * max_t ||h_t^clean||, averaged over layers.
double layered_stiv(const std::vector<StateTrajectory>& clean, const std::vector<StateTrajectory>& adv, double fraction,
                    std::vector<double>* per_layer = nullptr);

bool k_delayed(const StivResult& result, int k);

// Samples are (state-perturbation norm, output-perturbation norm).
AmplificationResult xcross(const std::vector<std::pair<double, double>>& samples, double budget);

RatioResult perturbation_ratio(const std::vector<double>& adv_out_deltas, const std::vector<double>& rand_out_deltas);

struct FreezeErase {
  double sfr = 0.0;  // percent
  double ser = 0.0;  // percent
};
FreezeErase freeze_erase_rates(const StateTrajectory& traj, double freeze_th = 0.01, double erase_th = 0.05);

double token_entropy(const std::vector<int>& tokens, int alphabet_size);

inline constexpr double kStateEntropyRidge = 1e-6;
// Gaussian differential entropy in bits of the window's sample covariance (+ridge * I).
double state_entropy(const RowMat& window);
// Histogram estimate: 16 equal-width bins per dimension, dimensions summed.
double state_entropy_histogram(const RowMat& window, int bins = 16);

double forgetting_rate(const std::vector<bool>& recalled);

struct MetricRow {
  std::string seq_id;
  std::string metric;
  double value;
  std::vector<std::string> labels;
};
std::string metrics_to_csv(const std::vector<MetricRow>& rows);

}  // namespace ssmsec
