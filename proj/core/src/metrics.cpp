#include "ssmsec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ssmsec {

StivResult stiv(const StateTrajectory& clean, const StateTrajectory& adv, double tau, const std::string& rule) {
  require(clean.states.rows() == adv.states.rows() && clean.states.cols() == adv.states.cols(), ErrorKind::Shape,
          "trajectories differ in shape");
  require(tau > 0.0, ErrorKind::InvalidArgument, "tau must be > 0");
  StivResult r;
  r.tau = tau;
  r.tau_rule = rule;
  const Eigen::Index rows = clean.states.rows();
  for (Eigen::Index t = 0; t < rows; ++t)
    if ((adv.states.row(t) - clean.states.row(t)).norm() > tau) r.corrupted_steps.push_back(static_cast<int>(t));
  r.value = static_cast<double>(r.corrupted_steps.size()) / static_cast<double>(rows);
  return r;
}

double tau_from_trajectory(const StateTrajectory& clean, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::InvalidArgument, "tau fraction must lie in (0, 1)");
  const double hmax = clean.states.rowwise().norm().maxCoeff();
  require(hmax > 0.0, ErrorKind::ZeroThreshold, "clean trajectory is identically zero");
  return fraction * hmax;
}

double layered_stiv(const std::vector<StateTrajectory>& clean, const std::vector<StateTrajectory>& adv, double fraction,
                    std::vector<double>* per_layer) {
  require(clean.size() == adv.size() && !clean.empty(), ErrorKind::Shape, "layer counts differ");
  double acc = 0.0;
  if (per_layer) per_layer->clear();
  for (std::size_t l = 0; l < clean.size(); ++l) {
    const double tau = tau_from_trajectory(clean[l], fraction);
    const double v = stiv(clean[l], adv[l], tau, "fraction-of-max").value;
    if (per_layer) per_layer->push_back(v);
    acc += v;
  }
  return acc / static_cast<double>(clean.size());
}

bool k_delayed(const StivResult& result, int k) {
  return std::any_of(result.corrupted_steps.begin(), result.corrupted_steps.end(), [k](int t) { return t >= k; });
}

AmplificationResult xcross(const std::vector<std::pair<double, double>>& samples, double budget) {
  require(!samples.empty(), ErrorKind::InsufficientData, "xcross needs at least one sample");
  AmplificationResult r;
  r.n_samples = samples.size();
  for (const auto& [state, out] : samples) {
    r.denominator += state;
    r.numerator += out;
  }
  r.denominator /= static_cast<double>(samples.size());
  r.numerator /= static_cast<double>(samples.size());
  require(r.denominator > 0.0, ErrorKind::UndefinedRatio, "mean state perturbation is zero");
  r.ratio = r.numerator / r.denominator;
  r.critically_amplifying = r.ratio > 2.0 && budget <= 0.01;
  return r;
}

RatioResult perturbation_ratio(const std::vector<double>& adv, const std::vector<double>& rnd) {
  require(!adv.empty() && !rnd.empty(), ErrorKind::InsufficientData, "perturbation_ratio needs samples");
  RatioResult r;
  for (double v : adv) r.adv_mean += v;
  for (double v : rnd) r.rand_mean += v;
  r.adv_mean /= static_cast<double>(adv.size());
  r.rand_mean /= static_cast<double>(rnd.size());
  if (r.rand_mean <= 0.0) {
    r.suppressed = true;
    r.rho = 1.0;
  } else {
    r.rho = r.adv_mean / r.rand_mean;
  }
  return r;
}

FreezeErase freeze_erase_rates(const StateTrajectory& traj, double freeze_th, double erase_th) {
  const int steps = traj.steps();
  require(steps >= 1, ErrorKind::InvalidArgument, "trajectory needs at least one step");
  int frozen = 0, erased = 0;
  for (int t = 1; t <= steps; ++t) {
    if ((traj.states.row(t) - traj.states.row(t - 1)).norm() < freeze_th) ++frozen;
    if (traj.states.row(t).norm() < erase_th) ++erased;
  }
  return FreezeErase{100.0 * frozen / steps, 100.0 * erased / steps};
}

double token_entropy(const std::vector<int>& tokens, int alphabet_size) {
  require(!tokens.empty(), ErrorKind::InsufficientData, "token_entropy needs tokens");
  std::map<int, std::size_t> counts;
  for (int t : tokens) {
    require(alphabet_size <= 0 || (t >= 0 && t < alphabet_size), ErrorKind::Encoding, "token outside alphabet");
    ++counts[t];
  }
  const double n = static_cast<double>(tokens.size());
  double h = 0.0;
  for (const auto& [tok, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double state_entropy(const RowMat& window) {
  require(window.rows() >= 2 && window.cols() >= 1, ErrorKind::InsufficientData, "state window too small");
  const Eigen::Index n = window.cols();
  const Eigen::RowVectorXd mu = window.colwise().mean();
  const RowMat centered = window.rowwise() - mu;
  Mat cov = centered.transpose() * centered / static_cast<double>(window.rows() - 1);
  cov.diagonal().array() += kStateEntropyRidge;
  require(cov.allFinite(), ErrorKind::InvalidArgument, "state covariance is not finite");
  Eigen::LLT<Mat> llt(cov);
  require(llt.info() == Eigen::Success, ErrorKind::InvalidArgument, "state covariance is not positive definite");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI * M_E) + logdet) / std::log(2.0);
}

double state_entropy_histogram(const RowMat& window, int bins) {
  require(window.rows() >= 1 && bins >= 1, ErrorKind::InsufficientData, "state window too small");
  double total = 0.0;
  for (Eigen::Index c = 0; c < window.cols(); ++c) {
    const double lo = window.col(c).minCoeff(), hi = window.col(c).maxCoeff();
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (Eigen::Index r = 0; r < window.rows(); ++r) {
      int b = hi > lo ? static_cast<int>((window(r, c) - lo) / (hi - lo) * bins) : 0;
      b = std::clamp(b, 0, bins - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
    for (std::size_t k : counts) {
      if (k == 0) continue;
      const double p = static_cast<double>(k) / static_cast<double>(window.rows());
      total -= p * std::log2(p);
    }
  }
  return total;
}

double forgetting_rate(const std::vector<bool>& recalled) {
  require(!recalled.empty(), ErrorKind::InsufficientData, "forgetting_rate needs outcomes");
  const auto failures = std::count(recalled.begin(), recalled.end(), false);
  return 100.0 * static_cast<double>(failures) / static_cast<double>(recalled.size());
}

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "seq_id,metric,value,labels\n";
  for (const auto& r : rows) {
    os << r.seq_id << ',' << r.metric << ',' << r.value << ',';
    for (std::size_t i = 0; i < r.labels.size(); ++i) os << (i ? ";" : "") << r.labels[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace ssmsec
