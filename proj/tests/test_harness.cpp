// Reduced-size runs of the experiment harnesses. Full-size runs live in the acceptance binary.

#include "ssmsec/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssmsec;

TEST(Harness, E5ShapeAndExponents) {
  const ExperimentReport r = run_e5(parse_config("id = e5\nn_values = 8, 16, 32, 64\nrecover_n = 4, 8\n"));
  const Table* counts = r.find_table("queries");
  ASSERT_NE(counts, nullptr);
  EXPECT_EQ(counts->rows.size(), 4u);
  EXPECT_NEAR(r.value("slope_ssd"), 2.0, 1e-9);
  EXPECT_NEAR(r.value("slope_generic"), 3.0, 1e-9);
  EXPECT_EQ(r.value("speedup_exact"), 1.0);
  EXPECT_LE(r.value("recovery_error_max"), 0.01);
}

TEST(Harness, E3HasOneRowPerCell) {
  const ExperimentReport r = run_e3(parse_config("id = e3\nlengths = 500\ndocs = 1\n"));
  EXPECT_EQ(r.value("rows"), 9.0);  // 3 modes x 3 positions
  EXPECT_EQ(r.value("entropy_misses"), 0.0);
  EXPECT_EQ(r.value("needle_misses"), 0.0);
  bool harness_flag = false;
  for (const auto& f : r.flags) harness_flag = harness_flag || f.find("harness") != std::string::npos;
  EXPECT_TRUE(harness_flag);
}

TEST(Harness, E4FlagsThePureLtiControl) {
  const ExperimentReport r = run_e4(
      parse_config("id = e4\nseeds = 42\nn_train = 60\nsequences = 6\nlength = 32\nepochs = 1\npgd_steps = 10\n"));
  bool inapplicable = false;
  for (const auto& f : r.flags) inapplicable = inapplicable || f.find("inapplicable") != std::string::npos;
  EXPECT_TRUE(inapplicable);
  EXPECT_EQ(r.value("freeze_not_lower_count"), 0.0);
  EXPECT_GT(r.value("freeze_gate_drop_min"), 0.0);
}

TEST(Harness, E2ReportsRatiosPerEpsilon) {
  const ExperimentReport r = run_e2(parse_config(
      "id = e2\nseeds = 42\nn_train = 80\nsequences = 10\nlength = 32\nepochs = 2\nepsilons = 0.01, 0.05\n"));
  const Table* rho = r.find_table("rho");
  ASSERT_NE(rho, nullptr);
  EXPECT_FALSE(rho->rows.empty());
  EXPECT_TRUE(std::isfinite(r.value("rho_loose_min")));
  EXPECT_GT(r.value("rho_loose_0.010"), 1.0);
}

TEST(Harness, E1ReducedRunProducesAllTables) {
  const ExperimentReport r = run_e1(parse_config(
      "id = e1\nseeds = 42\nn = 120\nlength = 60\ntest_size = 40\nsequences = 4\nbudgets = 3, 10\n"
      "sweep_budget = 10\nepochs = 1\nm1_check = false\n"));
  for (const char* t : {"stiv", "ratio", "tau_sweep", "models"}) EXPECT_NE(r.find_table(t), nullptr) << t;
  EXPECT_GE(r.value("targeted_b10"), r.value("random_b10"));
  EXPECT_GE(r.value("targeted_b10"), r.value("stealth_b10") - 1e-12);
}

TEST(Harness, DispatchRejectsUnknownIds) {
  ExperimentConfig cfg;
  cfg.id = "e9";
  EXPECT_THROW(run_experiment(cfg), Error);
}

TEST(Harness, ParallelForCoversEveryIndex) {
  std::vector<int> hit(37, 0);
  parallel_for(37, 4, [&](int i) { hit[static_cast<std::size_t>(i)] += 1; });
  for (const int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(3, 2, [](int i) {
                 if (i == 1) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}
