#include "ssmsec/rng.hpp"
#include "ssmsec/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssmsec;

TEST(Wilson, MatchesHandCalculation) {
  // 51/101 at z = 1.959963984540054.
  const double z = 1.959963984540054, n = 101, p = 51.0 / 101.0;
  const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  const CiResult r = wilson_ci(51, 101);
  EXPECT_NEAR(r.lower, centre - half, 1e-12);
  EXPECT_NEAR(r.upper, centre + half, 1e-12);
  EXPECT_NEAR(r.lower, 0.40916, 1e-4);
  EXPECT_NEAR(r.upper, 0.60038, 1e-4);
  EXPECT_EQ(r.method, "wilson");
}

TEST(Wilson, CoverageOnBernoulli) {
  Rng rng(7, 1);
  int covered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(100);
    for (auto& v : s) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const CiResult r = bootstrap_ci(s);
    covered += r.lower <= 0.3 && 0.3 <= r.upper;
  }
  EXPECT_GE(covered, 930);
  EXPECT_LE(covered, 970);
}

TEST(Bootstrap, ConstantSamplesGiveDegenerateInterval) {
  const CiResult r = bootstrap_ci({2.5, 2.5, 2.5, 2.5}, 0.95, 500);
  EXPECT_EQ(r.lower, 2.5);
  EXPECT_EQ(r.upper, 2.5);
  EXPECT_EQ(r.method, "percentile-bootstrap");
}

TEST(Bootstrap, SeedReproducibleAndOrdered) {
  std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.2, 0.55};
  const CiResult a = bootstrap_ci(s, 0.95, 2000, 9);
  const CiResult b = bootstrap_ci(s, 0.95, 2000, 9);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_LE(a.lower, a.point);
  EXPECT_LE(a.point, a.upper);
}

TEST(Bootstrap, TooFewSamples) {
  try {
    bootstrap_ci({1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(Permutation, IdenticalGroupsGiveOne) {
  EXPECT_DOUBLE_EQ(permutation_test({1, 2, 3}, {1, 2, 3}, 999), 1.0);
}

TEST(Permutation, ExtremeSeparation) {
  EXPECT_LE(permutation_test({0, 0, 0, 0, 0}, {10, 10, 10, 10, 10}), 0.01);
}

TEST(Permutation, SymmetricInLabels) {
  std::vector<double> a{0.3, 1.2, 0.7, 2.0}, b{1.5, 2.2, 0.9, 3.1, 2.8};
  EXPECT_DOUBLE_EQ(permutation_test(a, b, 2000, 5), permutation_test(b, a, 2000, 5));
}

TEST(Permutation, SuperUniformUnderNull) {
  Rng rng(11, 2);
  const int sims = 1000;
  std::vector<double> ps;
  for (int s = 0; s < sims; ++s) {
    std::vector<double> a(10), b(10);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    ps.push_back(permutation_test(a, b, 200, static_cast<std::uint64_t>(s)));
  }
  for (double x : {0.01, 0.05, 0.1, 0.25, 0.5}) {
    const double frac = static_cast<double>(std::count_if(ps.begin(), ps.end(), [x](double p) { return p <= x; })) / sims;
    EXPECT_LE(frac, x + 0.01) << "x=" << x;
  }
}

TEST(Holm, HandExample) {
  const auto r = holm_bonferroni({0.01, 0.04});
  EXPECT_TRUE(r[0]);
  EXPECT_TRUE(r[1]);
}

TEST(Holm, StopsAtFirstFailure) {
  const auto r = holm_bonferroni({0.03, 0.01, 0.04});
  // 0.01 < 0.05/3, 0.03 >= 0.025 stops the procedure.
  EXPECT_TRUE(r[1]);
  EXPECT_FALSE(r[0]);
  EXPECT_FALSE(r[2]);
}

TEST(Holm, AllOnesNoneRejectedAndSingle) {
  for (bool b : holm_bonferroni({1, 1, 1})) EXPECT_FALSE(b);
  EXPECT_TRUE(holm_bonferroni({0.049})[0]);
  EXPECT_FALSE(holm_bonferroni({0.05})[0]);
}

TEST(Holm, Monotone) {
  Rng rng(3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(5);
    for (auto& v : p) v = rng.uniform() * 0.1;
    const auto before = holm_bonferroni(p);
    const std::size_t i = rng.uniform_int(5);
    p[i] *= rng.uniform();
    const auto after = holm_bonferroni(p);
    for (std::size_t k = 0; k < 5; ++k)
      if (before[k]) EXPECT_TRUE(after[k]);
  }
}

TEST(HolmAdjust, MatchesRejections) {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.2};
  const auto adj = holm_adjust(p);
  const auto rej = holm_bonferroni(p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(adj[i] < 0.05, static_cast<bool>(rej[i]));
  EXPECT_DOUBLE_EQ(adj[0], 0.04);
}

TEST(LogLogOls, ExactPowers) {
  const OlsFit sq = loglog_ols({{64, 4096}, {128, 16384}, {256, 65536}});
  EXPECT_NEAR(sq.slope, 2.0, 1e-12);
  EXPECT_NEAR(sq.r2, 1.0, 1e-12);
  std::vector<std::pair<double, double>> cube;
  for (double n : {64.0, 128.0, 256.0, 512.0, 1024.0}) cube.emplace_back(n, n * n * n);
  const OlsFit cu = loglog_ols(cube);
  EXPECT_NEAR(cu.slope, 3.0, 1e-12);
  EXPECT_NEAR(cu.slope_lower, 3.0, 1e-9);
}

TEST(LogLogOls, DegenerateAndDomain) {
  EXPECT_THROW(loglog_ols({{64, 4096}, {64, 4096}}), Error);
  EXPECT_THROW(loglog_ols({{0, 1}, {2, 4}}), Error);
}

TEST(Pearson, PerfectLine) {
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {2, 4, 6, 8}), 1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {8, 6, 4, 2}), -1.0, 1e-12);
}
