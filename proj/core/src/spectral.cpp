#include "ssmsec/spectral.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssmsec {

namespace {

void require_stable(const DiscreteSsm& sys) {
  for (const auto& m : sys.modes())
    require(std::abs(m.value) < 1.0, ErrorKind::ResolventSingularity, "discrete pole on or outside the unit circle");
}

void fill_stats(GainProfile& p) {
  const double n = static_cast<double>(p.gains.size());
  double mean = 0.0;
  for (double g : p.gains) mean += g;
  mean /= n;
  double var = 0.0;
  for (double g : p.gains) var += (g - mean) * (g - mean);
  p.mean = mean;
  p.stddev = std::sqrt(var / n);
  p.gamma = p.mean + 2.0 * p.stddev;
}

}  // namespace

std::string GainProfile::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "omega,gain\n";
  for (std::size_t i = 0; i < freqs.size(); ++i) os << freqs[i] << ',' << gains[i] << '\n';
  return os.str();
}

std::string GainProfile::summary_json() const {
  nlohmann::json j{{"omega_star", omega_star}, {"hinf", hinf}, {"gamma", gamma}, {"mean", mean}, {"stddev", stddev},
                   {"grid_size", freqs.size()}};
  return j.dump();
}

CMat transfer_gain(const DiscreteSsm& sys, double omega) {
  require_stable(sys);
  const int dio = sys.d_io();
  const cdouble z = std::polar(1.0, -omega);
  CMat h = sys.d().cast<cdouble>();
  const int n = sys.n_state();
  if (n == 0) return h;
  CMat scaled(n, dio);
  CMat cc(dio, n);
  int slot = 0;
  for (const auto& m : sys.modes()) {
    if (!m.pair) {
      const cdouble r = 1.0 / (1.0 - m.value * z);
      scaled.row(slot) = r * sys.b_bar().row(slot).cast<cdouble>();
      cc.col(slot) = sys.c().col(slot).cast<cdouble>();
      slot += 1;
    } else {
      // Pair contribution 0.5 * (g b^T r + conj(g) conj(b)^T r'), written with two real-slot columns.
      const cdouble r1 = 1.0 / (1.0 - m.value * z);
      const cdouble r2 = 1.0 / (1.0 - std::conj(m.value) * z);
      const Eigen::RowVectorXcd beta =
          sys.b_bar().row(slot).cast<cdouble>() + cdouble(0, 1) * sys.b_bar().row(slot + 1).cast<cdouble>();
      const Eigen::VectorXcd gam =
          sys.c().col(slot).cast<cdouble>() - cdouble(0, 1) * sys.c().col(slot + 1).cast<cdouble>();
      scaled.row(slot) = 0.5 * r1 * beta;
      cc.col(slot) = gam;
      scaled.row(slot + 1) = 0.5 * r2 * beta.conjugate();
      cc.col(slot + 1) = gam.conjugate();
      slot += 2;
    }
  }
  h.noalias() += cc * scaled;
  return h;
}

double spectral_norm(const CMat& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<CMat> svd(m);
    return svd.singularValues()(0);
  }
  // Jacobi SVD is slow at model widths; the Gram eigenvalues give sigma_max to working precision.
  const CMat gram = m.rows() >= m.cols() ? CMat(m.adjoint() * m) : CMat(m * m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

GainProfile gain_profile(const TransferFn& h, int grid_size) {
  require(grid_size >= 16, ErrorKind::InvalidArgument, "grid size must be >= 16");
  GainProfile p;
  p.freqs.resize(static_cast<std::size_t>(grid_size));
  p.gains.resize(static_cast<std::size_t>(grid_size));
  for (int k = 0; k < grid_size; ++k) {
    const double w = M_PI * static_cast<double>(k) / static_cast<double>(grid_size - 1);
    p.freqs[static_cast<std::size_t>(k)] = w;
    p.gains[static_cast<std::size_t>(k)] = spectral_norm(h(w));
  }
  fill_stats(p);
  const auto best = std::max_element(p.gains.begin(), p.gains.end());
  p.hinf = *best;
  p.omega_star = p.freqs[static_cast<std::size_t>(best - p.gains.begin())];

  // Candidate peaks: strict local maxima of the grid (plateaus are not refined).
  std::vector<std::pair<double, int>> peaks;
  const auto& g = p.gains;
  for (int k = 0; k < grid_size; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    const bool left = k == 0 || g[i] > g[i - 1];
    const bool right = k == grid_size - 1 || g[i] >= g[i + 1];
    const bool strict_somewhere = (k > 0 && g[i] > g[i - 1]) || (k < grid_size - 1 && g[i] > g[i + 1]);
    if (left && right && strict_somewhere) peaks.emplace_back(g[i], k);
  }
  std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (peaks.size() > 32) peaks.resize(32);

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double step = M_PI / static_cast<double>(grid_size - 1);
  for (const auto& peak : peaks) {
    const int k = peak.second;
    double lo = std::max(0.0, p.freqs[static_cast<std::size_t>(k)] - step);
    double hi = std::min(M_PI, p.freqs[static_cast<std::size_t>(k)] + step);
    auto f = [&](double w) { return spectral_norm(h(w)); };
    double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-6) {
      if (f1 >= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - invphi * (hi - lo);
        f1 = f(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + invphi * (hi - lo);
        f2 = f(x2);
      }
    }
    const double w = 0.5 * (lo + hi);
    const double fw = f(w);
    // Endpoints of [0, pi] are evaluated explicitly since the search interior never reaches them.
    const double wl = std::max(0.0, p.freqs[static_cast<std::size_t>(k)] - step);
    const double wr = std::min(M_PI, p.freqs[static_cast<std::size_t>(k)] + step);
    for (auto [cand, val2] : {std::pair{w, fw}, std::pair{wl, f(wl)}, std::pair{wr, f(wr)}}) {
      if (val2 > p.hinf) {
        p.hinf = val2;
        p.omega_star = cand;
      }
    }
  }
  return p;
}

GainProfile gain_profile(const DiscreteSsm& sys, int grid_size) {
  require_stable(sys);
  return gain_profile([&sys](double w) { return transfer_gain(sys, w); }, grid_size);
}

GainProfile spectral_probe(const SequenceOracle& oracle, const std::vector<double>& freqs, double amplitude, int steps,
                           int d_in, int in_ch, int out_ch) {
  require(amplitude > 0.0, ErrorKind::InvalidArgument, "probe amplitude must be > 0");
  require(steps >= 8, ErrorKind::InvalidArgument, "probe length must be >= 8");
  require(in_ch >= 0 && in_ch < d_in, ErrorKind::InvalidArgument, "input channel out of range");
  require(!freqs.empty(), ErrorKind::InvalidArgument, "no probe frequencies");
  GainProfile p;
  const int burn = steps / 4;
  for (double w : freqs) {
    RowMat u = RowMat::Zero(steps, d_in);
    for (int t = 0; t < steps; ++t) u(t, in_ch) = amplitude * std::cos(w * t);
    const RowMat y = oracle(u);
    require(y.rows() == steps && out_ch < y.cols(), ErrorKind::Shape, "oracle output has wrong shape");
    double scc = 0, sss = 0, scs = 0, syc = 0, sys_ = 0;
    for (int t = burn; t < steps; ++t) {
      const double c = std::cos(w * t), s = std::sin(w * t), v = y(t, out_ch);
      scc += c * c;
      sss += s * s;
      scs += c * s;
      syc += v * c;
      sys_ += v * s;
    }
    double alpha = 0.0, beta = 0.0;
    const double det = scc * sss - scs * scs;
    if (sss < 1e-9 * static_cast<double>(steps - burn) || std::abs(det) < 1e-12 * scc * sss) {
      alpha = syc / scc;
    } else {
      alpha = (syc * sss - sys_ * scs) / det;
      beta = (sys_ * scc - syc * scs) / det;
    }
    p.freqs.push_back(w);
    p.gains.push_back(std::hypot(alpha, beta) / amplitude);
  }
  fill_stats(p);
  const auto best = std::max_element(p.gains.begin(), p.gains.end());
  p.hinf = *best;
  p.omega_star = p.freqs[static_cast<std::size_t>(best - p.gains.begin())];
  return p;
}

RowMat spectral_perturbation(double omega, double epsilon, int steps, int d, double phase) {
  require(epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
  require(steps >= 1 && d >= 1, ErrorKind::InvalidDimension, "perturbation shape must be positive");
  RowMat out(steps, d);
  for (int t = 0; t < steps; ++t) out.row(t).setConstant(epsilon * std::cos(omega * t + phase));
  return out;
}

BoundCheck verify_spectral_bound(const DiscreteSsm& sys, const RowMat& du, double hinf) {
  const RowMat dy = lti_scan(sys, du).y;
  BoundCheck b;
  b.lhs = dy.norm();
  b.rhs = hinf * du.norm();
  b.tight_ratio = b.rhs > 0.0 ? b.lhs / b.rhs : 0.0;
  if (b.lhs > b.rhs * (1.0 + 1e-9)) {
    std::ostringstream os;
    os.precision(17);
    os << "spectral bound violated: lhs=" << b.lhs << " rhs=" << b.rhs;
    fail(ErrorKind::InvariantViolation, os.str());
  }
  return b;
}

BoundCheck verify_spectral_bound(const DiscreteSsm& sys, const RowMat& du) {
  return verify_spectral_bound(sys, du, gain_profile(sys).hinf);
}

GainProfile linearized_gain(const SelectiveSsm& sys, const RowMat& u0, int grid_size) {
  const SelectiveScanResult r = selective_scan(sys, u0);
  const int n = sys.n_state();
  const int dch = sys.channels();
  const Eigen::Index steps = u0.rows();
  TransferFn h = [&](double w) {
    const cdouble z = std::polar(1.0, -w);
    // m(k) = mean_t bbar_t(k) / (1 - abar_t(k) z), shared by every channel.
    Eigen::VectorXcd m = Eigen::VectorXcd::Zero(n);
    for (Eigen::Index t = 0; t < steps; ++t)
      for (int k = 0; k < n; ++k) m(k) += r.b_bar(t, k) / (1.0 - r.a_bar(t, k) * z);
    m /= static_cast<double>(steps);
    CMat out = CMat::Zero(dch, dch);
    for (int ch = 0; ch < dch; ++ch) out(ch, ch) = (sys.c.row(ch).cast<cdouble>() * m)(0) + sys.d(ch);
    return out;
  };
  return gain_profile(h, grid_size);
}

}  // namespace ssmsec
