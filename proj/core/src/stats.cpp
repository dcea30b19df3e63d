#include "ssmsec/stats.hpp"

#include "ssmsec/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmsec {

namespace {
constexpr int kChunk = 1000;
}

double normal_quantile_two_sided(double level) {
  require(level > 0.0 && level < 1.0, ErrorKind::Domain, "confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
}

double mean(const std::vector<double>& v) {
  require(!v.empty(), ErrorKind::InsufficientData, "mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  require(v.size() >= 2, ErrorKind::InsufficientData, "stddev needs two samples");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

CiResult wilson_ci(std::size_t successes, std::size_t n, double level) {
  require(n >= 1 && successes <= n, ErrorKind::InsufficientData, "wilson interval needs n >= 1");
  const double z = normal_quantile_two_sided(level);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  const double half = z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  CiResult r;
  r.point = p;
  r.lower = std::max(0.0, centre - half);
  r.upper = std::min(1.0, centre + half);
  r.method = "wilson";
  return r;
}

CiResult bootstrap_ci(const std::vector<double>& samples, double level, int resamples, std::uint64_t seed,
                      SampleKind kind) {
  require(samples.size() >= 2, ErrorKind::InsufficientData, "bootstrap needs at least two samples");
  require(resamples >= 1, ErrorKind::InvalidArgument, "resample count must be positive");
  if (kind == SampleKind::Auto) {
    const bool binary = std::all_of(samples.begin(), samples.end(), [](double v) { return v == 0.0 || v == 1.0; });
    kind = binary ? SampleKind::Binary : SampleKind::Continuous;
  }
  if (kind == SampleKind::Binary) {
    std::size_t k = 0;
    for (double v : samples) {
      require(v == 0.0 || v == 1.0, ErrorKind::InvalidArgument, "binary sample must be 0 or 1");
      k += v == 1.0;
    }
    return wilson_ci(k, samples.size(), level);
  }
  const std::size_t n = samples.size();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (int b0 = 0; b0 < resamples; b0 += kChunk) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b0 / kChunk)), 0xb007);
    for (int b = b0; b < std::min(resamples, b0 + kChunk); ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += samples[rng.uniform_int(n)];
      means[static_cast<std::size_t>(b)] = s / static_cast<double>(n);
    }
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - level;
  auto quant = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  CiResult r;
  r.point = mean(samples);
  r.lower = std::min(r.point, quant(alpha / 2.0));
  r.upper = std::max(r.point, quant(1.0 - alpha / 2.0));
  r.method = "percentile-bootstrap";
  r.n_resamples = resamples;
  return r;
}

double permutation_test(const std::vector<double>& a, const std::vector<double>& b, int n_perm, std::uint64_t seed) {
  require(!a.empty() && !b.empty(), ErrorKind::InsufficientData, "permutation test needs two non-empty groups");
  require(n_perm >= 1, ErrorKind::InvalidArgument, "permutation count must be positive");
  // Canonical pooled order and split size make p independent of which group is passed first.
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  std::vector<double> pooled(small);
  pooled.insert(pooled.end(), large.begin(), large.end());
  const std::size_t na = small.size();
  const std::size_t nb = large.size();
  std::sort(pooled.begin(), pooled.end());
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  auto diff = [&](const std::vector<double>& v) {
    const double sa = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
    return sa / static_cast<double>(na) - (total - sa) / static_cast<double>(nb);
  };
  const double observed = std::abs(mean(a) - mean(b));
  // Relative slack so that permutations tying the observed split are counted despite rounding.
  const double tol = 1e-12 * std::max(1.0, observed);
  long count = 0;
  for (int p0 = 0; p0 < n_perm; p0 += kChunk) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p0 / kChunk)), 0x9e47);
    for (int p = p0; p < std::min(n_perm, p0 + kChunk); ++p) {
      rng.shuffle(pooled);
      if (std::abs(diff(pooled)) >= observed - tol) ++count;
    }
  }
  return (1.0 + static_cast<double>(count)) / (static_cast<double>(n_perm) + 1.0);
}

std::vector<bool> holm_bonferroni(const std::vector<double>& p, double alpha) {
  for (double v : p) require(v >= 0.0 && v <= 1.0, ErrorKind::Domain, "p-value outside [0, 1]");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  std::vector<bool> reject(p.size(), false);
  const std::size_t m = p.size();
  for (std::size_t k = 0; k < m; ++k) {
    if (p[order[k]] < alpha / static_cast<double>(m - k)) {
      reject[order[k]] = true;
    } else {
      break;
    }
  }
  return reject;
}

std::vector<double> holm_adjust(const std::vector<double>& p) {
  for (double v : p) require(v >= 0.0 && v <= 1.0, ErrorKind::Domain, "p-value outside [0, 1]");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  std::vector<double> adj(p.size());
  double running = 0.0;
  const std::size_t m = p.size();
  for (std::size_t k = 0; k < m; ++k) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - k) * p[order[k]]));
    adj[order[k]] = running;
  }
  return adj;
}

OlsFit loglog_ols(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 2, ErrorKind::InsufficientData, "log-log fit needs two points");
  std::vector<double> x, y;
  for (const auto& [n, c] : points) {
    require(n > 0.0 && c > 0.0, ErrorKind::Domain, "log-log fit needs positive values");
    x.push_back(std::log(n));
    y.push_back(std::log(c));
  }
  const double mx = mean(x), my = mean(y);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorKind::Domain, "log-log fit needs distinct N values");
  OlsFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  const std::size_t dof = x.size() - 2;
  if (dof > 0) {
    f.slope_se = std::sqrt(sse / static_cast<double>(dof) / sxx);
    const double t = boost::math::quantile(boost::math::students_t(static_cast<double>(dof)), 0.975);
    f.slope_lower = f.slope - t * f.slope_se;
    f.slope_upper = f.slope + t * f.slope_se;
  } else {
    f.slope_lower = f.slope_upper = f.slope;
  }
  return f;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::InsufficientData, "pearson needs paired samples");
  const double mx = mean(x), my = mean(y);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::UndefinedRatio, "pearson undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ssmsec
