#pragma once

#include "ssmsec/common.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ssmsec {

struct CiResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::string method;  // "percentile-bootstrap" or "wilson"
  int n_resamples = 0;
};

enum class SampleKind { Auto, Continuous, Binary };

inline constexpr int kDefaultResamples = 10000;

// Two-sided normal quantile z_{1-(1-level)/2}.
double normal_quantile_two_sided(double level);

CiResult wilson_ci(std::size_t successes, std::size_t n, double level = 0.95);
// Auto: samples that are all exactly 0 or 1 are treated as a binary proportion.
CiResult bootstrap_ci(const std::vector<double>& samples, double level = 0.95, int resamples = kDefaultResamples,
                      std::uint64_t seed = 42, SampleKind kind = SampleKind::Auto);

double permutation_test(const std::vector<double>& a, const std::vector<double>& b, int n_perm = 10000,
                        std::uint64_t seed = 42);

std::vector<bool> holm_bonferroni(const std::vector<double>& p_values, double alpha = 0.05);
// Holm-adjusted p-values (monotone step-down, capped at 1).
std::vector<double> holm_adjust(const std::vector<double>& p_values);

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_se = 0.0;
  double slope_lower = 0.0;
  double slope_upper = 0.0;
};

OlsFit loglog_ols(const std::vector<std::pair<double, double>>& points);
double pearson(const std::vector<double>& x, const std::vector<double>& y);
double mean(const std::vector<double>& v);
double stddev(const std::vector<double>& v);  // sample (n-1) standard deviation

}  // namespace ssmsec
