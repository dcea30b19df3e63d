#include "ssmsec/filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ssmsec {

void BandstopSpec::validate() const {
  require(center >= 0.0 && center <= M_PI, ErrorKind::InvalidArgument, "bandstop center must lie in [0, pi]");
  require(half_bandwidth > 0.0, ErrorKind::InvalidArgument, "bandstop half-bandwidth must be > 0");
  require(order >= 1, ErrorKind::InvalidArgument, "bandstop order must be >= 1");
  require(center - half_bandwidth > 0.0 || center + half_bandwidth < M_PI, ErrorKind::InvalidArgument,
          "bandstop covers the whole spectrum");
}

namespace {

enum class Shape { Bandstop, Lowpass, Highpass };

cdouble bilinear(cdouble s) { return (2.0 + s) / (2.0 - s); }

double prewarp(double w) { return 2.0 * std::tan(w / 2.0); }

}  // namespace

std::vector<Biquad> design_bandstop(const BandstopSpec& spec) {
  spec.validate();
  const int n = spec.order;
  const double lo = spec.center - spec.half_bandwidth;
  const double hi = spec.center + spec.half_bandwidth;
  Shape shape = Shape::Bandstop;
  if (lo <= 0.0) shape = Shape::Highpass;
  else if (hi >= M_PI) shape = Shape::Lowpass;

  std::vector<cdouble> proto;
  for (int k = 1; k <= n; ++k) proto.push_back(std::polar(1.0, M_PI * (2.0 * k + n - 1.0) / (2.0 * n)));

  std::vector<cdouble> poles;
  double theta0 = 0.0;
  if (shape == Shape::Bandstop) {
    const double w1 = prewarp(lo), w2 = prewarp(hi);
    const double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
    theta0 = 2.0 * std::atan(w0 / 2.0);
    for (const cdouble p : proto) {
      const cdouble half = bw / (2.0 * p);
      const cdouble root = std::sqrt(half * half - w0 * w0);
      poles.push_back(bilinear(half + root));
      poles.push_back(bilinear(half - root));
    }
  } else {
    const double wc = prewarp(shape == Shape::Highpass ? hi : lo);
    for (const cdouble p : proto) poles.push_back(bilinear(shape == Shape::Highpass ? wc / p : wc * p));
  }

  // Group conjugate pairs; leftover real poles are paired with each other.
  std::vector<std::pair<cdouble, cdouble>> pairs;
  std::vector<double> reals;
  std::vector<bool> used(poles.size(), false);
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (used[i]) continue;
    if (std::abs(poles[i].imag()) < 1e-12) {
      reals.push_back(poles[i].real());
      used[i] = true;
      continue;
    }
    std::size_t best = i;
    double dist = 1e300;
    for (std::size_t j = i + 1; j < poles.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(poles[j] - std::conj(poles[i]));
      if (d < dist) {
        dist = d;
        best = j;
      }
    }
    require(best != i, ErrorKind::InvalidArgument, "unpaired complex pole in filter design");
    used[i] = used[best] = true;
    pairs.emplace_back(poles[i], std::conj(poles[i]));
  }
  std::sort(reals.begin(), reals.end());

  std::vector<Biquad> sos;
  auto numerator = [&](bool second_order) -> std::array<double, 3> {
    if (shape == Shape::Bandstop) return {1.0, -2.0 * std::cos(theta0), 1.0};
    const double sgn = shape == Shape::Lowpass ? 1.0 : -1.0;
    return second_order ? std::array<double, 3>{1.0, 2.0 * sgn, 1.0} : std::array<double, 3>{1.0, sgn, 0.0};
  };
  auto push = [&](double a1, double a2, bool second_order) {
    auto b = numerator(second_order);
    const double zsign = shape == Shape::Highpass ? -1.0 : 1.0;  // normalise at DC, or at pi for highpass
    const double num = b[0] + zsign * b[1] + b[2];
    const double den = 1.0 + zsign * a1 + a2;
    const double g = den / num;
    sos.push_back(Biquad{g * b[0], g * b[1], g * b[2], a1, a2});
  };
  for (const auto& [p1, p2] : pairs) push(-(p1 + p2).real(), (p1 * p2).real(), true);
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) push(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1], true);
  if (reals.size() % 2 == 1) {
    require(shape != Shape::Bandstop, ErrorKind::InvalidArgument, "odd real pole count in bandstop design");
    push(-reals.back(), 0.0, false);
  }
  return sos;
}

cdouble sos_response(const std::vector<Biquad>& sos, double omega) {
  const cdouble z1 = std::polar(1.0, -omega);
  const cdouble z2 = z1 * z1;
  cdouble h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

Vec sos_filter(const std::vector<Biquad>& sos, const Vec& x) {
  Vec y = x;
  if (x.size() == 0) return y;
  double level = x(0);
  for (const auto& s : sos) {
    const double dc_num = s.b0 + s.b1 + s.b2;
    const double dc_den = 1.0 + s.a1 + s.a2;
    const double g = std::abs(dc_den) > 1e-300 ? dc_num / dc_den : 0.0;
    double z1 = level * (s.b1 + s.b2 - (s.a1 + s.a2) * g);
    double z2 = level * (s.b2 - s.a2 * g);
    for (Eigen::Index t = 0; t < y.size(); ++t) {
      const double in = y(t);
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y(t) = out;
    }
    level *= g;
  }
  return y;
}

RowMat filtfilt(const std::vector<Biquad>& sos, const RowMat& u) {
  const Eigen::Index steps = u.rows();
  RowMat out(u.rows(), u.cols());
  if (steps == 0) return out;
  // Pad long enough for the slowest pole's transient to decay by ~1e-3.
  double radius = 0.0;
  for (const auto& s : sos) radius = std::max(radius, s.a2 > 0.0 ? std::sqrt(s.a2) : std::abs(s.a1));
  Eigen::Index pad = 3 * (2 * static_cast<Eigen::Index>(sos.size()) + 1);
  if (radius > 0.0 && radius < 1.0)
    pad = std::max<Eigen::Index>(pad, static_cast<Eigen::Index>(std::ceil(std::log(1e-3) / std::log(radius))));
  pad = std::min<Eigen::Index>(pad, steps - 1);
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const Vec x = u.col(c);
    Vec ext(steps + 2 * pad);
    for (Eigen::Index i = 0; i < pad; ++i) ext(i) = 2.0 * x(0) - x(pad - i);
    ext.segment(pad, steps) = x;
    for (Eigen::Index i = 0; i < pad; ++i) ext(pad + steps + i) = 2.0 * x(steps - 1) - x(steps - 2 - i);
    Vec fwd = sos_filter(sos, ext);
    Vec rev = fwd.reverse();
    Vec back = sos_filter(sos, rev).reverse();
    out.col(c) = back.segment(pad, steps);
  }
  return out;
}

RowMat bandstop_filter(const RowMat& u, const BandstopSpec& spec) { return filtfilt(design_bandstop(spec), u); }

}  // namespace ssmsec
