#include "ssmsec/attacks.hpp"

#include "ssmsec/metrics.hpp"
#include "ssmsec/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ssmsec {

namespace {

void fill_state_stiv(const StackedModel& model, const RowMat& x, PerturbationRecord& rec) {
  const ForwardPass clean = forward_continuous(model, x);
  const ForwardPass adv = forward_continuous(model, x + rec.delta);
  rec.delta_y_norm = (adv.logits - clean.logits).norm();
  try {
    rec.stiv = layered_stiv(clean.trajectories(), adv.trajectories(), kDefaultTauFraction, &rec.layer_stiv);
  } catch (const Error& e) {
    // A collapsed model has an all-zero clean trajectory; StIV is undefined there but delta_y is still valid.
    if (e.kind() != ErrorKind::ZeroThreshold) throw;
    rec.stiv = std::nan("");
    rec.layer_stiv.clear();
  }
}

StateTrajectory first_selective_trajectory(const ForwardPass& fp) {
  for (const auto& l : fp.layers)
    if (l.kind == LayerKind::Selective) return l.traj;
  fail(ErrorKind::InapplicableAttack, "model has no selective layer");
}

}  // namespace

PerturbationRecord pgd_output_attack(const StackedModel& model, const RowMat& x, double epsilon, int steps,
                                     std::uint64_t seed) {
  require(epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
  // The squared output distance has zero gradient at delta = 0, so PGD starts from a random point in the ball.
  const LossSpec objective = LossSpec::squared_error(forward_continuous(model, x).logits);
  PgdOptions opt;
  opt.epsilon = epsilon;
  opt.steps = steps;
  opt.maximize = true;
  opt.random_start = true;
  opt.seed = seed;
  PerturbationRecord rec = pgd(model, x, objective, opt);
  rec.strategy = "pgd";
  fill_state_stiv(model, x, rec);
  return rec;
}

PerturbationRecord random_output_perturbation(const StackedModel& model, const RowMat& x, double epsilon,
                                              std::uint64_t seed) {
  require(epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
  PerturbationRecord rec;
  rec.strategy = "random";
  rec.budget = epsilon;
  rec.delta = RowMat::Zero(x.rows(), x.cols());
  Rng rng(seed, 0x4a4d);
  if (epsilon > 0.0)
    for (Eigen::Index i = 0; i < rec.delta.size(); ++i) rec.delta.data()[i] = rng.uniform(-epsilon, epsilon);
  rec.delta_linf = rec.delta.size() ? rec.delta.cwiseAbs().maxCoeff() : 0.0;
  rec.delta_l2 = rec.delta.norm();
  fill_state_stiv(model, x, rec);
  return rec;
}

const char* to_string(GateMode m) { return m == GateMode::Freeze ? "freeze" : "erase"; }

SelectionResult selection_subversion(const StackedModel& model, const RowMat& x, double epsilon, GateMode mode,
                                     int steps, std::uint64_t seed) {
  require(model.has_selective(), ErrorKind::InapplicableAttack,
          "no selective scan mechanism to subvert: every layer is time-invariant, so the input cannot move the gates");
  PgdOptions opt;
  opt.epsilon = epsilon;
  opt.steps = steps;
  opt.maximize = mode == GateMode::Erase;
  opt.seed = seed;
  SelectionResult out;
  out.record = pgd(model, x, LossSpec::gate_sum(1.0), opt);
  out.record.strategy = to_string(mode);
  fill_state_stiv(model, x, out.record);

  const ForwardPass clean = forward_continuous(model, x);
  const ForwardPass adv = forward_continuous(model, x + out.record.delta);
  out.gate_sum_clean = clean.gate_sum();
  out.gate_sum_adv = adv.gate_sum();
  const FreezeErase fc = freeze_erase_rates(first_selective_trajectory(clean));
  const FreezeErase fa = freeze_erase_rates(first_selective_trajectory(adv));
  out.sfr_clean = fc.sfr;
  out.ser_clean = fc.ser;
  out.sfr_adv = fa.sfr;
  out.ser_adv = fa.ser;
  return out;
}

// ---- Haystack documents ----

const char* to_string(HaystackMode m) {
  switch (m) {
    case HaystackMode::Benign: return "benign";
    case HaystackMode::Low: return "low";
    case HaystackMode::High: return "high";
  }
  return "?";
}

double default_entropy_target(HaystackMode m) {
  switch (m) {
    case HaystackMode::Benign: return 4.2;
    case HaystackMode::Low: return 1.8;
    case HaystackMode::High: return 6.2;
  }
  return 0.0;
}

namespace {

std::vector<double> geometric_probs(double r, int v) {
  std::vector<double> p(static_cast<std::size_t>(v));
  double w = 1.0;
  for (auto& x : p) {
    x = w;
    w *= r;
  }
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= s;
  return p;
}

double entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

// Largest-remainder rounding of p * total.
std::vector<int> quotas(const std::vector<double>& p, int total) {
  std::vector<int> q(p.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double exact = p[k] * total;
    q[k] = static_cast<int>(std::floor(exact));
    used += q[k];
    rem.emplace_back(exact - q[k], k);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < total - used; ++i) ++q[rem[static_cast<std::size_t>(i)].second];
  return q;
}

}  // namespace

Haystack make_haystack(int length, const std::vector<int>& needle, double position_fraction, HaystackMode mode,
                       double target_bits, int alphabet_size, std::uint64_t seed) {
  require(alphabet_size >= 2, ErrorKind::InvalidArgument, "alphabet needs at least two symbols");
  require(static_cast<int>(needle.size()) < length, ErrorKind::InvalidArgument, "needle must be shorter than the document");
  require(position_fraction >= 0.0 && position_fraction < 1.0, ErrorKind::InvalidArgument,
          "position fraction must lie in [0, 1)");
  for (int t : needle) require(t >= 0 && t < alphabet_size, ErrorKind::Encoding, "needle token outside alphabet");
  const double cap = std::log2(static_cast<double>(alphabet_size));
  if (target_bits < 0.0) target_bits = default_entropy_target(mode);
  if (target_bits > cap) {
    std::ostringstream os;
    os << "entropy target " << target_bits << " bits exceeds the alphabet cap of " << cap << " bits";
    fail(ErrorKind::InfeasibleEntropy, os.str());
  }

  const int fill = length - static_cast<int>(needle.size());
  // Entropy of the truncated geometric law is increasing in r on [0, 1].
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (entropy_bits(geometric_probs(mid, alphabet_size)) < target_bits ? lo : hi) = mid;
  }
  const std::vector<int> q = quotas(geometric_probs(0.5 * (lo + hi), alphabet_size), fill);

  // Symbol ranks are permuted so the most frequent symbol is not always token 0.
  Rng rng(seed, 0x4a59);
  std::vector<int> symbols(static_cast<std::size_t>(alphabet_size));
  std::iota(symbols.begin(), symbols.end(), 0);
  rng.shuffle(symbols);
  std::vector<int> body;
  body.reserve(static_cast<std::size_t>(fill));
  for (std::size_t k = 0; k < q.size(); ++k) body.insert(body.end(), static_cast<std::size_t>(q[k]), symbols[k]);
  rng.shuffle(body);

  Haystack h;
  h.target = target_bits;
  h.needle_position = std::min(static_cast<int>(std::floor(position_fraction * length)), fill);
  h.tokens.reserve(static_cast<std::size_t>(length));
  h.tokens.insert(h.tokens.end(), body.begin(), body.begin() + h.needle_position);
  h.tokens.insert(h.tokens.end(), needle.begin(), needle.end());
  h.tokens.insert(h.tokens.end(), body.begin() + h.needle_position, body.end());
  h.entropy = token_entropy(h.tokens, alphabet_size);
  return h;
}

// ---- Extraction ----

CountingOracle::CountingOracle(DiscreteSsm sys, double noise, std::uint64_t seed)
    : sys_(std::move(sys)), noise_(noise), seed_(seed) {
  require(sys_.d_io() == 1, ErrorKind::InvalidDimension, "counting oracle wraps a single-channel system");
  require(noise >= 0.0, ErrorKind::InvalidArgument, "noise must be >= 0");
}

Vec CountingOracle::operator()(const Vec& u) {
  ++queries_;
  RowMat in(u.size(), 1);
  in.col(0) = u;
  Vec y = lti_scan(sys_, in).y.col(0);
  if (noise_ > 0.0) {
    Rng rng(seed_, static_cast<std::uint64_t>(queries_));
    for (Eigen::Index t = 0; t < y.size(); ++t) y(t) += noise_ * rng.normal();
  }
  return y;
}

long long ssd_query_count(int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "state size must be >= 1");
  return static_cast<long long>(n) * n;
}

long long generic_query_count(int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "state size must be >= 1");
  return static_cast<long long>(n) * n * n;
}

namespace {

// Ho-Kalman realization from Markov parameters m_0..m_{2n-1} (no feedthrough).
void ho_kalman(const Vec& m, int n, ExtractionResult& r) {
  Mat h0(n, n), h1(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      h0(i, j) = m(i + j);
      h1(i, j) = m(i + j + 1);
    }
  Eigen::JacobiSVD<Mat> svd(h0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  require(s(0) > 0.0, ErrorKind::RecoveryFailure, "impulse response is identically zero");
  int rank = 0;
  while (rank < n && s(rank) > 1e-10 * s(0)) ++rank;
  const Vec sq = s.head(rank).cwiseSqrt();
  const Mat u = svd.matrixU().leftCols(rank);
  const Mat v = svd.matrixV().leftCols(rank);
  const Mat obs = u * sq.asDiagonal();
  const Mat ctrl = sq.asDiagonal() * v.transpose();
  const Vec inv = sq.cwiseInverse();
  r.a_hat = inv.asDiagonal() * u.transpose() * h1 * v * inv.asDiagonal();
  r.b_hat = ctrl.col(0);
  r.c_hat = obs.row(0);
  Eigen::EigenSolver<Mat> eig(r.a_hat, false);
  r.a_bar = eig.eigenvalues().real();
  std::sort(r.a_bar.data(), r.a_bar.data() + r.a_bar.size());
}

void finish(CountingOracle& oracle, int n, double delta_target, ExtractionResult& r) {
  ho_kalman(r.markov_estimate, n, r);
  r.query_count = oracle.queries();
  r.relative_error = impulse_response_error(oracle.system(), r.a_hat, r.b_hat, r.c_hat, 2 * n);
  if (r.relative_error > delta_target) {
    std::ostringstream os;
    os << r.method << " recovery error " << r.relative_error << " exceeds target " << delta_target;
    fail(ErrorKind::RecoveryFailure, os.str());
  }
}

void require_extractable(const CountingOracle& oracle, int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "state size must be >= 1");
  require(oracle.system().d().cwiseAbs().maxCoeff() == 0.0, ErrorKind::InvalidArgument,
          "extraction assumes an oracle without feedthrough");
}

}  // namespace

ExtractionResult ssd_extract(CountingOracle& oracle, int n, double delta_target) {
  require_extractable(oracle, n);
  const long long before = oracle.queries();
  const int len = 2 * n;
  // Least-squares average over amplitudes and positions: m_k = sum a y / sum a^2.
  Vec num = Vec::Zero(len), den = Vec::Zero(len);
  for (int pos = 0; pos < n; ++pos)
    for (int level = 0; level < n; ++level) {
      const double amp = static_cast<double>(level + 1) / n;
      Vec u = Vec::Zero(len);
      u(pos) = amp;
      const Vec y = oracle(u);
      for (int k = 0; pos + k < len; ++k) {
        num(k) += amp * y(pos + k);
        den(k) += amp * amp;
      }
    }
  ExtractionResult r;
  r.method = "ssd";
  r.markov_estimate = num.cwiseQuotient(den);
  finish(oracle, n, delta_target, r);
  r.query_count = oracle.queries() - before;
  require(r.query_count == ssd_query_count(n), ErrorKind::InvariantViolation, "ssd schedule size drifted");
  return r;
}

ExtractionResult generic_extract(CountingOracle& oracle, int n, double delta_target, std::uint64_t seed) {
  require_extractable(oracle, n);
  const long long before = oracle.queries();
  const int len = 2 * n;
  const long long total = generic_query_count(n);
  // Each probe contributes one equation y_{L-1} = sum_s m_{L-1-s} u_s; normal equations are accumulated in place.
  Mat gram = Mat::Zero(len, len);
  Vec rhs = Vec::Zero(len);
  Rng rng(seed, 0x6e71);
  Vec u(len), rev(len);
  for (long long q = 0; q < total; ++q) {
    for (int s = 0; s < len; ++s) u(s) = rng.normal();
    const double y_last = oracle(u)(len - 1);
    for (int k = 0; k < len; ++k) rev(k) = u(len - 1 - k);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(rev);
    rhs += y_last * rev;
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  ExtractionResult r;
  r.method = "generic";
  r.markov_estimate = gram.ldlt().solve(rhs);
  finish(oracle, n, delta_target, r);
  r.query_count = oracle.queries() - before;
  require(r.query_count == total, ErrorKind::InvariantViolation, "generic schedule size drifted");
  return r;
}

double impulse_response_error(const DiscreteSsm& truth, const Mat& a_hat, const Mat& b_hat, const Mat& c_hat,
                              int length) {
  require(truth.d_io() == 1, ErrorKind::InvalidDimension, "impulse error expects a single-channel system");
  require(a_hat.rows() == a_hat.cols() && b_hat.rows() == a_hat.rows() && c_hat.cols() == a_hat.rows(),
          ErrorKind::Shape, "realization shapes disagree");
  const std::vector<Mat> k = conv_kernel(truth, length);
  double num = 0.0, den = 0.0;
  Mat x = b_hat;
  for (int t = 0; t < length; ++t) {
    const double est = (c_hat * x)(0, 0);
    const double ref = k[static_cast<std::size_t>(t)](0, 0);
    num += (est - ref) * (est - ref);
    den += ref * ref;
    x = a_hat * x;
  }
  require(den > 0.0, ErrorKind::RecoveryFailure, "true impulse response is identically zero");
  return std::sqrt(num / den);
}

std::string attack_log_line(const PerturbationRecord& r) {
  nlohmann::json j{{"seq_id", r.seq_id},       {"strategy", r.strategy}, {"budget", r.budget},
                   {"stiv", r.stiv},           {"delta_y_norm", r.delta_y_norm},
                   {"positions", r.positions}};
  return j.dump();
}

}  // namespace ssmsec
