#include "ssmsec/metrics.hpp"
#include "ssmsec/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssmsec;

namespace {
StateTrajectory traj(const RowMat& s) {
  StateTrajectory t;
  t.states = s;
  return t;
}
}  // namespace

TEST(Stiv, IdenticalIsZeroAndAllIsOne) {
  RowMat a = RowMat::Random(11, 3);
  EXPECT_EQ(stiv(traj(a), traj(a), 0.1).value, 0.0);
  RowMat b = a.array() + 1.0;
  EXPECT_EQ(stiv(traj(a), traj(b), 0.1).value, 1.0);
}

TEST(Stiv, FiftyOneOfHundredOne) {
  RowMat a = RowMat::Zero(101, 2), b = RowMat::Zero(101, 2);
  for (int t = 0; t < 51; ++t) b(2 * t % 101, 0) = 1.0;
  const StivResult r = stiv(traj(a), traj(b), 0.5);
  EXPECT_EQ(r.corrupted_steps.size(), 51u);
  EXPECT_NEAR(r.value, 51.0 / 101.0, 1e-15);
}

TEST(Stiv, ShapeMismatch) {
  try {
    stiv(traj(RowMat::Zero(4, 2)), traj(RowMat::Zero(5, 2)), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
}

TEST(Stiv, MonotoneInTau) {
  Rng rng(1, 1);
  RowMat a(65, 4), b(65, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = a.data()[i] + 0.3 * rng.normal();
  }
  double prev = 2.0;
  for (double tau : {0.01, 0.1, 0.3, 0.6, 1.0, 2.0}) {
    const double v = stiv(traj(a), traj(b), tau).value;
    EXPECT_LE(v, prev);
    EXPECT_GE(v, 0.0);
    prev = v;
  }
}

TEST(Tau, FractionOfMax) {
  RowMat s = RowMat::Zero(3, 2);
  s(1, 0) = 3.0;
  EXPECT_NEAR(tau_from_trajectory(traj(s), 0.1), 0.3, 1e-15);
  EXPECT_NEAR(tau_from_trajectory(traj(s), 0.05), 0.15, 1e-15);
  EXPECT_NEAR(tau_from_trajectory(traj(s), 0.2), 0.6, 1e-15);
  try {
    tau_from_trajectory(traj(RowMat::Zero(3, 2)), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroThreshold);
  }
}

TEST(KDelayed, Boundaries) {
  StivResult r;
  EXPECT_FALSE(k_delayed(r, 3));
  r.corrupted_steps = {0, 1, 2};
  EXPECT_FALSE(k_delayed(r, 3));
  r.corrupted_steps = {3};
  EXPECT_TRUE(k_delayed(r, 3));
}

TEST(Xcross, Arithmetic) {
  EXPECT_DOUBLE_EQ(xcross({{1, 1}, {2, 2}}, 0.01).ratio, 1.0);
  EXPECT_DOUBLE_EQ(xcross({{1, 0}, {2, 0}}, 0.01).ratio, 0.0);
  const AmplificationResult r = xcross({{1, 4}, {1, 4}}, 0.01);
  EXPECT_DOUBLE_EQ(r.ratio, 4.0);
  EXPECT_TRUE(r.critically_amplifying);
  EXPECT_FALSE(xcross({{1, 4}}, 0.02).critically_amplifying);
  EXPECT_THROW(xcross({{0, 1}}, 0.01), Error);
}

TEST(Xcross, ScaleEquivariance) {
  std::vector<std::pair<double, double>> s{{0.5, 1.0}, {0.7, 3.0}, {1.1, 0.2}};
  const double base = xcross(s, 0.01).ratio;
  auto out = s, in = s;
  for (auto& p : out) p.second *= 3.0;
  for (auto& p : in) p.first *= 3.0;
  EXPECT_NEAR(xcross(out, 0.01).ratio, 3.0 * base, 1e-12);
  EXPECT_NEAR(xcross(in, 0.01).ratio, base / 3.0, 1e-12);
}

TEST(PerturbationRatio, EqualAndSuppressed) {
  EXPECT_NEAR(perturbation_ratio({1, 2, 3}, {2, 2, 2}).rho, 1.0, 1e-15);
  const RatioResult s = perturbation_ratio({0, 0}, {0, 0});
  EXPECT_TRUE(s.suppressed);
  EXPECT_EQ(s.rho, 1.0);
}

TEST(FreezeErase, Cases) {
  RowMat c = RowMat::Constant(10, 3, 1.0);
  FreezeErase fe = freeze_erase_rates(traj(c));
  EXPECT_EQ(fe.sfr, 100.0);
  EXPECT_EQ(fe.ser, 0.0);
  fe = freeze_erase_rates(traj(RowMat::Zero(10, 3)));
  EXPECT_EQ(fe.sfr, 100.0);
  EXPECT_EQ(fe.ser, 100.0);
  Rng rng(4, 4);
  RowMat r(501, 8);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
  r.rowwise().normalize();
  fe = freeze_erase_rates(traj(r));
  EXPECT_LT(fe.sfr, 1.0);
  EXPECT_LT(fe.ser, 1.0);
}

TEST(TokenEntropy, ClosedForms) {
  EXPECT_NEAR(token_entropy({0, 1, 2, 3}, 4), 2.0, 1e-15);
  EXPECT_NEAR(token_entropy({2, 2, 2}, 4), 0.0, 1e-15);
  EXPECT_NEAR(token_entropy({0, 0, 1, 2}, 4), 1.5, 1e-15);
}

TEST(StateEntropy, ScalarClosedForm) {
  // Sample covariance of {-1, 1} is 2, so scale to unit variance.
  RowMat w(2, 1);
  w << -std::sqrt(0.5), std::sqrt(0.5);
  EXPECT_NEAR(state_entropy(w), 0.5 * std::log2(2 * M_PI * M_E * (1 + 1e-6)), 1e-12);
  EXPECT_NEAR(state_entropy(w), 2.0471, 1e-4);
}

TEST(StateEntropy, ScalingAddsNBits) {
  Rng rng(5, 5);
  RowMat w(64, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 10.0 * rng.normal();
  // The ridge makes the shift approximate; at variance ~100 it is below 1e-7 bits.
  EXPECT_NEAR(state_entropy(RowMat(2.0 * w)) - state_entropy(w), 3.0, 1e-6);
}

TEST(StateEntropy, ConstantWindowFloor) {
  RowMat w = RowMat::Constant(64, 4, 0.7);
  EXPECT_NEAR(state_entropy(w), 0.5 * 4 * std::log2(2 * M_PI * M_E * 1e-6), 1e-9);
}

TEST(StateEntropy, RotationInvariant) {
  Rng rng(6, 6);
  RowMat w(64, 4);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  Mat g(4, 4);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
  const RowMat rot = w * q.transpose();
  EXPECT_NEAR(state_entropy(rot), state_entropy(w), 1e-9);
}

TEST(StateEntropy, HistogramVariant) {
  RowMat w(16, 1);
  for (int i = 0; i < 16; ++i) w(i, 0) = i;
  EXPECT_NEAR(state_entropy_histogram(w), 4.0, 1e-12);
  EXPECT_NEAR(state_entropy_histogram(RowMat::Constant(8, 2, 1.0)), 0.0, 1e-15);
}

TEST(Forgetting, Rates) {
  EXPECT_EQ(forgetting_rate({true, true}), 0.0);
  EXPECT_EQ(forgetting_rate({false, false}), 100.0);
  EXPECT_EQ(forgetting_rate({true, false, true, true, false, true, true, true}), 25.0);
}

TEST(MetricsCsv, Header) {
  const std::string csv = metrics_to_csv({{"s1", "stiv", 0.5, {"targeted", "B=3"}}});
  EXPECT_EQ(csv, "seq_id,metric,value,labels\ns1,stiv,0.5,targeted;B=3\n");
}
