#include "ssmsec/defenses.hpp"
#include "ssmsec/experiments.hpp"
#include "ssmsec/metrics.hpp"
#include "testkit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace ssmsec;

namespace {

// Reference FNV-1a, byte at a time.
std::uint64_t fnv1a(const std::vector<double>& values) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const double v : values) {
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    for (const unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

GainProfile resonant_profile(double theta) {
  Mat b(2, 1), c(1, 2);
  b << 1.0, 0.0;
  c << 1.0, 0.0;
  const DiscreteSsm sys({Mode{std::polar(0.97, theta), true}}, b, c, Mat::Zero(1, 1));
  return gain_profile(sys, 1024);
}

}  // namespace

TEST(M1, BandsCoverThePeak) {
  const GainProfile p = resonant_profile(1.4);
  const auto bands = m1_bands(p);
  ASSERT_EQ(bands.size(), 1u);
  EXPECT_NEAR(bands[0].center, 1.4, 0.01);
  EXPECT_GE(bands[0].half_bandwidth, 0.1);
  EXPECT_DOUBLE_EQ(bands[0].threshold, p.gamma);
}

TEST(M1, FilterRemovesPeakToneAndPassesDc) {
  const GainProfile p = resonant_profile(2.0);
  const int steps = 4096;
  RowMat attack(steps, 1), dc = RowMat::Constant(steps, 1, 0.7);
  for (int t = 0; t < steps; ++t) attack(t, 0) = std::cos(p.omega_star * t);
  const RowMat fa = m1_filter(attack, p);
  EXPECT_LT(fa.squaredNorm(), 0.1 * attack.squaredNorm());
  EXPECT_NEAR(m1_filter(dc, p).mean(), 0.7, 0.007);
}

TEST(M1, CheckHarnessMeetsAttenuationTarget) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const M1Check c = m1_check(seed);
    EXPECT_GE(c.attack_energy_reduction, 0.9);
    EXPECT_NEAR(c.dc_gain, 1.0, 0.01);
  }
}

TEST(M1, ProjectionRemovesInBandBins) {
  const int n = 64;
  RowMat x(n, 2);
  for (int t = 0; t < n; ++t) {
    x(t, 0) = std::cos(2.0 * std::numbers::pi * 8 * t / n);  // bin 8 = 0.785 rad
    x(t, 1) = 1.0;
  }
  const RowMat y = m1_project(x, {BandstopSpec{0.785, 0.05, 4, 0.0}});
  EXPECT_LT(y.col(0).norm(), 1e-10);
  EXPECT_NEAR((y.col(1) - x.col(1)).norm(), 0.0, 1e-12);
}

TEST(M2, StateHashIsFnv1a) {
  Vec a(2), b(1);
  a << 1.5, -0.0;
  b << 3.25;
  EXPECT_EQ(state_hash({a, b}), fnv1a({1.5, -0.0, 3.25}));
  EXPECT_EQ(state_hash({}), 14695981039346656037ULL);
  EXPECT_NE(state_hash({a}), state_hash({b}));
}

TEST(M2, PoolLifecycleAndAudit) {
  double now = 0.0;
  SessionStatePool pool({Vec::Zero(2)}, [&] { return now; }, 10.0);
  const SessionKey alice{"alice", "s1"}, bob{"bob", "s1"};
  EXPECT_TRUE(pool.get_or_create(alice)[0].isZero());
  pool.put(alice, {Vec::Ones(2)});
  EXPECT_TRUE(pool.get_or_create(alice)[0].isApprox(Vec::Ones(2)));
  EXPECT_TRUE(pool.get_or_create(bob)[0].isZero());
  EXPECT_EQ(pool.size(), 2u);
  EXPECT_THROW(pool.put(bob, {Vec::Ones(3)}), Error);

  now = 5.0;
  pool.get_or_create(bob);
  now = 12.0;
  EXPECT_EQ(pool.sweep(), 1);  // alice idle for 12 s, bob for 7 s
  EXPECT_TRUE(pool.get_or_create(alice)[0].isZero());
  pool.reset(bob);
  const auto audit = pool.audit();
  ASSERT_EQ(audit.size(), 4u);
  EXPECT_EQ(audit[0].event, "create");
  EXPECT_EQ(audit[2].event, "timeout");
  EXPECT_EQ(audit[2].key, "alice/s1");
  EXPECT_EQ(audit[2].hash, state_hash({Vec::Ones(2)}));
  EXPECT_EQ(audit[3].event, "reset");
  EXPECT_NE(pool.audit_jsonl().find("\"event\":\"timeout\""), std::string::npos);
}

TEST(M2, ServeIsIsolatedAcrossSessions) {
  const M2Check c = m2_isolation_check(60, 3);
  EXPECT_EQ(c.pairs, 60);
  EXPECT_EQ(c.bleeds, 0);
}

TEST(M2, ServeCarriesStateWithinASession) {
  Rng rng(4, 0);
  const StackedModel m = testkit::random_small_model(rng, false);
  std::vector<Vec> h0;
  for (const auto& l : m.layers) h0.push_back(Vec::Zero(l.state_width()));
  SessionStatePool pool(h0);
  const RowMat x = encode_reals(m, testkit::random_sequence(rng, 10, m.d_in));
  const SessionKey k{"u", "s"};
  const Vec first = m2_serve(pool, k, m, x);
  const Vec second = m2_serve(pool, k, m, x);
  EXPECT_GT((first - second).norm(), 0.0);
  pool.reset(k);
  EXPECT_TRUE(m2_serve(pool, k, m, x).isApprox(first));
}

TEST(M3, CalibrationOnStationaryDeltas) {
  Rng rng(5, 0);
  const int steps = 10000, w = 8;
  RowMat states = RowMat::Zero(steps + 1, w);
  for (int t = 1; t <= steps; ++t)
    for (int j = 0; j < w; ++j) states(t, j) = states(t - 1, j) + rng.normal();
  const RowMat inputs = RowMat::Ones(steps, 2);
  const auto alerts = m3_monitor(states, inputs);
  EXPECT_LE(static_cast<double>(alerts.size()) / steps, 0.005);
}

TEST(M3, SpikeBenchmark) {
  const M3Benchmark b = m3_spike_benchmark(40, 1000, 500, 6);
  EXPECT_GE(b.tpr, 0.85);
  EXPECT_LE(b.fpr, 0.05);
}

TEST(M3, InputSideChangeSuppressesAlert) {
  const int steps = 400;
  Rng rng(7, 0);
  RowMat states = RowMat::Zero(steps + 1, 3), inputs = RowMat::Ones(steps, 1);
  for (int t = 1; t <= steps; ++t)
    for (int j = 0; j < 3; ++j) states(t, j) = states(t - 1, j) + 0.1 * rng.normal();
  states.bottomRows(steps + 1 - 300).array() += 10.0;
  EXPECT_EQ(m3_monitor(states, inputs).size(), 1u);
  inputs.bottomRows(steps - 299).array() = 20.0;  // the input jumps on the same step
  EXPECT_TRUE(m3_monitor(states, inputs).empty());
}

TEST(M4, EntropyThreshold) {
  Rng rng(8, 0);
  RowMat wide(201, 8), narrow(201, 8);
  for (Eigen::Index i = 0; i < wide.size(); ++i) {
    wide.data()[i] = rng.normal();
    narrow.data()[i] = 0.01 * rng.normal();
  }
  // 8 unit-variance dims carry about 8 * 2.05 bits; scaled by 0.01 each loses 6.6 bits.
  EXPECT_EQ(m4_monitor(wide).size(), 201u - 64u);
  EXPECT_TRUE(m4_monitor(narrow).empty());
  const auto a = m4_monitor(wide);
  EXPECT_EQ(a.front().t, 64);
  EXPECT_EQ(alerts_to_csv(a).rfind("t,kind,score,threshold\n", 0), 0u);
}

TEST(M5, SigmaFormulaAndEmpiricalSpread) {
  const double sigma = m5_sigma(1.0, 1e-5, 1.0);
  EXPECT_NEAR(sigma, std::sqrt(2.0 * std::log(1.25e5)), 1e-12);
  EXPECT_EQ(m5_sigma(INFINITY, 1e-5, 1.0), 0.0);
  const RowMat u = RowMat::Zero(50000, 2);
  std::vector<NoiseAudit> audit;
  const RowMat y = m5_gaussian(u, 1.0, 1e-5, 1.0, 9, &audit);
  const double sd = std::sqrt(y.squaredNorm() / static_cast<double>(y.size()));
  EXPECT_NEAR(sd / sigma, 1.0, 0.01);
  ASSERT_EQ(audit.size(), 1u);
  EXPECT_EQ(audit[0].seed, 9u);
  EXPECT_TRUE(m5_gaussian(RowMat::Ones(3, 1), INFINITY, 1e-5, 1.0, 1).isApprox(RowMat::Ones(3, 1)));
}

TEST(M5, SensitivityViolationIsRejected) {
  try {
    m5_gaussian(RowMat::Constant(2, 2, 1.0), 1.0, 1e-5, 1.0, 1);
    FAIL() << "expected sensitivity-violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SensitivityViolation);
  }
  const RowMat n = normalize_rows(RowMat::Constant(2, 2, 1.0));
  EXPECT_NEAR(n.row(0).norm(), 1.0, 1e-15);
  EXPECT_NO_THROW(m5_gaussian(n, 1.0, 1e-5, 1.0, 1));
}

TEST(M6, BandProjectionIsAnOrthogonalProjector) {
  Rng rng(10, 0);
  const RowMat d = testkit::random_sequence(rng, 64, 2);
  const RowMat p = band_project(d, 0.5, 1.0);
  EXPECT_TRUE(band_project(p, 0.5, 1.0).isApprox(p, 1e-12));
  EXPECT_NEAR((d - p).cwiseProduct(p).sum(), 0.0, 1e-10);
  EXPECT_NEAR(band_energy_fraction(p, 0.5, 1.0), 1.0, 1e-12);
  EXPECT_TRUE(band_project(d, 0.0, std::numbers::pi).isApprox(d, 1e-12));
}
