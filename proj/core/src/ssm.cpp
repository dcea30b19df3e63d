#include "ssmsec/ssm.hpp"

#include <cmath>

namespace ssmsec {

namespace {

constexpr double kMaxDiscreteMagnitude = 1.0 - 1e-12;

void check_io_shapes(int n, const Mat& b, const Mat& c, const Mat& d) {
  const auto dio = d.rows();
  require(d.cols() == dio, ErrorKind::Shape, "feedthrough must be square");
  require(b.rows() == n && b.cols() == dio, ErrorKind::Shape, "input map must be N x D");
  require(c.rows() == dio && c.cols() == n, ErrorKind::Shape, "output map must be D x N");
}

std::vector<Mode> real_modes(const Vec& a) {
  std::vector<Mode> modes(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) modes[static_cast<std::size_t>(i)] = Mode{cdouble(a(i), 0.0), false};
  return modes;
}

}  // namespace

int state_width(const std::vector<Mode>& modes) {
  int w = 0;
  for (const auto& m : modes) w += m.width();
  return w;
}

bool has_pairs(const std::vector<Mode>& modes) {
  for (const auto& m : modes)
    if (m.pair) return true;
  return false;
}

ContinuousSsm::ContinuousSsm(std::vector<Mode> modes, Mat b, Mat c, Mat d)
    : modes_(std::move(modes)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
  require(d_.rows() >= 1, ErrorKind::InvalidDimension, "d_io must be positive");
  check_io_shapes(state_width(modes_), b_, c_, d_);
  for (const auto& m : modes_) {
    require(std::isfinite(m.value.real()) && std::isfinite(m.value.imag()), ErrorKind::InvalidArgument,
            "continuous eigenvalue is not finite");
    require(m.value.real() < 0.0, ErrorKind::InvalidArgument, "continuous eigenvalue must have negative real part");
  }
}

ContinuousSsm ContinuousSsm::real_diagonal(const Vec& a, Mat b, Mat c, Mat d) {
  return ContinuousSsm(real_modes(a), std::move(b), std::move(c), std::move(d));
}

DiscreteSsm::DiscreteSsm(std::vector<Mode> modes, Mat b_bar, Mat c, Mat d, double step)
    : modes_(std::move(modes)), b_bar_(std::move(b_bar)), c_(std::move(c)), d_(std::move(d)), step_(step) {
  require(d_.rows() >= 1, ErrorKind::InvalidDimension, "d_io must be positive");
  check_io_shapes(state_width(modes_), b_bar_, c_, d_);
  require(all_finite(b_bar_) && all_finite(c_) && all_finite(d_), ErrorKind::InvalidArgument,
          "discrete system has nonfinite entries");
  has_pairs_ = ssmsec::has_pairs(modes_);
  if (!has_pairs_) {
    a_real_.resize(static_cast<Eigen::Index>(modes_.size()));
    for (std::size_t i = 0; i < modes_.size(); ++i) a_real_(static_cast<Eigen::Index>(i)) = modes_[i].value.real();
  }
}

DiscreteSsm DiscreteSsm::real_diagonal(const Vec& a_bar, Mat b_bar, Mat c, Mat d, double step) {
  return DiscreteSsm(real_modes(a_bar), std::move(b_bar), std::move(c), std::move(d), step);
}

void SelectiveSsm::validate() const {
  const auto n = a_log.size();
  const auto dch = c.rows();
  require(n >= 1 && dch >= 1, ErrorKind::InvalidDimension, "selective layer needs N >= 1 and D >= 1");
  require(w_delta.rows() == n && w_delta.cols() == dch, ErrorKind::Shape, "w_delta must be N x D");
  require(b_delta.size() == n, ErrorKind::Shape, "b_delta must have N entries");
  require(w_b.rows() == n && w_b.cols() == dch, ErrorKind::Shape, "w_b must be N x D");
  require(c.cols() == n, ErrorKind::Shape, "c must be D x N");
  require(d.size() == dch, ErrorKind::Shape, "d must have D entries");
  require((a_log.array() > 0.0).all(), ErrorKind::InvalidArgument, "a_log entries must be positive");
}

DiscreteSsm SelectiveSsm::frozen(const Vec& a_bar, const Vec& b_bar) const {
  const int n = n_state();
  const int dch = channels();
  Vec a(n * dch);
  Mat bb = Mat::Zero(n * dch, dch);
  Mat cc = Mat::Zero(dch, n * dch);
  for (int ch = 0; ch < dch; ++ch) {
    for (int k = 0; k < n; ++k) {
      a(ch * n + k) = a_bar(k);
      bb(ch * n + k, ch) = b_bar(k);
      cc(ch, ch * n + k) = c(ch, k);
    }
  }
  Mat dd = d.asDiagonal();
  return DiscreteSsm::real_diagonal(a, std::move(bb), std::move(cc), std::move(dd));
}

Mat hippo_legs(int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "hippo_legs requires n >= 1");
  Mat a = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k <= i; ++k) a(i, k) = -std::sqrt(2.0 * i + 1.0) * std::sqrt(2.0 * k + 1.0);
  return a;
}

Vec hippo_legs_diagonal(int n) {
  require(n >= 1, ErrorKind::InvalidDimension, "hippo_legs requires n >= 1");
  Vec a(n);
  for (int i = 0; i < n; ++i) a(i) = -(2.0 * i + 1.0);
  return a;
}

DiscreteSsm zoh_discretize(const ContinuousSsm& sys, double step) {
  require(std::isfinite(step) && step > 0.0, ErrorKind::InvalidArgument, "step must be > 0");
  const auto& modes = sys.modes();
  std::vector<Mode> out(modes.size());
  Mat b_bar = sys.b();
  int slot = 0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const cdouble mu = modes[k].value;
    if (!modes[k].pair) {
      const double a = mu.real();
      const double z = step * a;
      double abar = std::exp(z);
      const double phi = std::abs(a) < 1e-12 ? step : std::expm1(z) / a;
      if (abar > kMaxDiscreteMagnitude) abar = kMaxDiscreteMagnitude;
      require(std::isfinite(abar) && std::isfinite(phi), ErrorKind::DiscretizationOverflow,
              "zoh produced a nonfinite value");
      out[k] = Mode{cdouble(abar, 0.0), false};
      b_bar.row(slot) *= phi;
      slot += 1;
    } else {
      const cdouble z = step * mu;
      cdouble lambda = std::exp(z);
      cdouble phi;
      if (std::abs(mu) < 1e-12) {
        phi = step;
      } else if (std::abs(z) < 1e-5) {
        phi = step * (1.0 + z / 2.0 + z * z / 6.0);
      } else {
        phi = (lambda - 1.0) / mu;
      }
      const double mag = std::abs(lambda);
      if (mag > kMaxDiscreteMagnitude) lambda *= kMaxDiscreteMagnitude / mag;
      require(std::isfinite(lambda.real()) && std::isfinite(lambda.imag()) && std::isfinite(phi.real()) &&
                  std::isfinite(phi.imag()),
              ErrorKind::DiscretizationOverflow, "zoh produced a nonfinite value");
      out[k] = Mode{lambda, true};
      const Eigen::RowVectorXd bx = sys.b().row(slot);
      const Eigen::RowVectorXd by = sys.b().row(slot + 1);
      b_bar.row(slot) = phi.real() * bx - phi.imag() * by;
      b_bar.row(slot + 1) = phi.imag() * bx + phi.real() * by;
      slot += 2;
    }
  }
  return DiscreteSsm(std::move(out), std::move(b_bar), sys.c(), sys.d(), step);
}

ScanResult lti_scan(const DiscreteSsm& sys, const RowMat& u, const Vec& h0) {
  const int n = sys.n_state();
  require(u.cols() == sys.d_io(), ErrorKind::Shape, "input width does not match system");
  require(h0.size() == n, ErrorKind::Shape, "initial state has wrong size");
  require(u.allFinite() && h0.allFinite(), ErrorKind::InvalidArgument, "scan input is not finite");
  const Eigen::Index steps = u.rows();

  ScanResult out;
  RowMat drive = u * sys.b_bar().transpose();  // T x N
  RowMat& h = out.traj.states;
  h.resize(steps + 1, n);
  h.row(0) = h0.transpose();
  if (!sys.has_pairs()) {
    const Eigen::RowVectorXd a = sys.a_real().transpose();
    for (Eigen::Index t = 0; t < steps; ++t) h.row(t + 1) = a.cwiseProduct(h.row(t)) + drive.row(t);
  } else {
    const auto& modes = sys.modes();
    for (Eigen::Index t = 0; t < steps; ++t) {
      int slot = 0;
      for (const auto& m : modes) {
        if (!m.pair) {
          h(t + 1, slot) = m.value.real() * h(t, slot) + drive(t, slot);
          slot += 1;
        } else {
          const double x = h(t, slot), y = h(t, slot + 1);
          h(t + 1, slot) = m.value.real() * x - m.value.imag() * y + drive(t, slot);
          h(t + 1, slot + 1) = m.value.imag() * x + m.value.real() * y + drive(t, slot + 1);
          slot += 2;
        }
      }
    }
  }
  out.y = h.bottomRows(steps) * sys.c().transpose() + u * sys.d().transpose();
  return out;
}

ScanResult lti_scan(const DiscreteSsm& sys, const RowMat& u) { return lti_scan(sys, u, Vec::Zero(sys.n_state())); }

std::vector<Mat> conv_kernel(const DiscreteSsm& sys, int length) {
  require(length >= 1, ErrorKind::InvalidDimension, "kernel length must be >= 1");
  std::vector<Mat> kernel;
  kernel.reserve(static_cast<std::size_t>(length));
  Mat p = sys.b_bar();
  const auto& modes = sys.modes();
  for (int t = 0; t < length; ++t) {
    kernel.push_back(sys.c() * p);
    int slot = 0;
    for (const auto& m : modes) {
      if (!m.pair) {
        p.row(slot) *= m.value.real();
        slot += 1;
      } else {
        const Eigen::RowVectorXd x = p.row(slot), y = p.row(slot + 1);
        p.row(slot) = m.value.real() * x - m.value.imag() * y;
        p.row(slot + 1) = m.value.imag() * x + m.value.real() * y;
        slot += 2;
      }
    }
  }
  return kernel;
}

RowMat conv_apply(const std::vector<Mat>& kernel, const Mat& d, const RowMat& u) {
  const Eigen::Index steps = u.rows();
  require(static_cast<Eigen::Index>(kernel.size()) >= steps, ErrorKind::Shape, "kernel shorter than input");
  RowMat y = u * d.transpose();
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index s = 0; s <= t; ++s)
      y.row(t) += (kernel[static_cast<std::size_t>(t - s)] * u.row(s).transpose()).transpose();
  return y;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

SelectiveScanResult selective_scan(const SelectiveSsm& sys, const RowMat& u, const Vec& h0) {
  sys.validate();
  const int n = sys.n_state();
  const int dch = sys.channels();
  require(u.cols() == dch, ErrorKind::Shape, "input width does not match selective layer");
  require(h0.size() == n * dch, ErrorKind::Shape, "initial state has wrong size");
  require(u.allFinite() && h0.allFinite(), ErrorKind::InvalidArgument, "scan input is not finite");
  const Eigen::Index steps = u.rows();

  SelectiveScanResult out;
  RowMat pre = u * sys.w_delta.transpose();
  pre.rowwise() += sys.b_delta.transpose();
  out.b_bar = u * sys.w_b.transpose();
  out.delta.resize(steps, n);
  out.a_bar.resize(steps, n);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int k = 0; k < n; ++k) {
      const double dlt = softplus(pre(t, k));
      const double e = std::exp(dlt);
      require(std::isfinite(dlt) && std::isfinite(e), ErrorKind::GateOverflow, "selective gate overflowed");
      out.delta(t, k) = dlt;
      out.a_bar(t, k) = std::exp(-e * sys.a_log(k));
    }
  }

  RowMat& h = out.traj.states;
  h.resize(steps + 1, n * dch);
  h.row(0) = h0.transpose();
  out.y.resize(steps, dch);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int ch = 0; ch < dch; ++ch) {
      const double uc = u(t, ch);
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        const int idx = ch * n + k;
        const double v = out.a_bar(t, k) * h(t, idx) + out.b_bar(t, k) * uc;
        h(t + 1, idx) = v;
        acc += sys.c(ch, k) * v;
      }
      out.y(t, ch) = acc + sys.d(ch) * uc;
    }
  }
  return out;
}

SelectiveScanResult selective_scan(const SelectiveSsm& sys, const RowMat& u) {
  return selective_scan(sys, u, Vec::Zero(sys.state_width()));
}

}  // namespace ssmsec
