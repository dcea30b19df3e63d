#include "ssmsec/attacks.hpp"
#include "ssmsec/metrics.hpp"
#include "testkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace ssmsec;

namespace {

StackedModel token_model(LayerKind first, std::uint64_t seed) {
  ModelSpec s;
  s.alphabet_size = 4;
  s.d_model = 4;
  s.n_state = 4;
  s.n_layers = 2;
  s.kinds = {first, LayerKind::Lti};
  s.embed_offset = 2.0;
  s.sel_a_min = 0.2;
  s.sel_a_max = 1.0;
  return init_model(s, seed);
}

std::vector<int> random_tokens(Rng& rng, int steps) {
  std::vector<int> t(static_cast<std::size_t>(steps));
  for (auto& v : t) v = static_cast<int>(rng.uniform_int(4));
  return t;
}

}  // namespace

TEST(Greedy, SingleEditMatchesExhaustive) {
  for (const LayerKind kind : {LayerKind::Lti, LayerKind::Selective}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const StackedModel m = token_model(kind, seed);
      Rng rng(seed, 1);
      const auto tokens = random_tokens(rng, 8);
      const auto edits = greedy_edits(m, tokens, 1);
      const FirstLayerScorer scorer(m, tokens, 0.1);
      EXPECT_DOUBLE_EQ(scorer.stiv_of(edits), exhaustive_best_stiv(m, tokens, 1));
    }
  }
}

TEST(Greedy, NeverBeatsExhaustiveAtLengthEight) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const StackedModel m = token_model(LayerKind::Lti, seed);
    Rng rng(seed, 2);
    const auto tokens = random_tokens(rng, 8);
    const FirstLayerScorer scorer(m, tokens, 0.1);
    for (const int b : {2, 3}) {
      const double g = scorer.stiv_of(greedy_edits(m, tokens, b));
      const double best = exhaustive_best_stiv(m, tokens, b);
      EXPECT_LE(g, best + 1e-15);
      EXPECT_GE(g, exhaustive_best_stiv(m, tokens, 1) - 1e-15);
    }
  }
}

TEST(Greedy, PrefixesAreSmallerBudgetSolutions) {
  const StackedModel m = token_model(LayerKind::Lti, 7);
  Rng rng(7, 3);
  const auto tokens = random_tokens(rng, 60);
  const auto full = greedy_edits(m, tokens, 12);
  for (const int b : {1, 5, 9}) {
    const auto part = greedy_edits(m, tokens, b);
    ASSERT_EQ(part.size(), static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
      EXPECT_EQ(part[i].position, full[i].position);
      EXPECT_EQ(part[i].token, full[i].token);
    }
  }
}

TEST(Greedy, IncrementalScoreMatchesRescan) {
  const StackedModel m = token_model(LayerKind::Lti, 8);
  Rng rng(8, 4);
  const auto tokens = random_tokens(rng, 40);
  FirstLayerScorer scorer(m, tokens, 0.1);
  std::vector<TokenEdit> committed;
  std::vector<bool> allowed(tokens.size(), true);
  for (int round = 0; round < 6; ++round) {
    const auto c = scorer.best(allowed);
    scorer.commit({c.position, c.token});
    committed.push_back({c.position, c.token});
    allowed[static_cast<std::size_t>(c.position)] = false;
    EXPECT_EQ(c.count, scorer.corrupted());
    EXPECT_DOUBLE_EQ(static_cast<double>(scorer.corrupted()) / 41.0, scorer.stiv_of(committed));
  }
}

TEST(Injection, TargetedDominatesRandomOnPairedTrials) {
  const StackedModel m = token_model(LayerKind::Lti, 9);
  int wins = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng(9, 100 + trial);
    const auto tokens = random_tokens(rng, 50);
    const auto t = inject_targeted(m, tokens, 5);
    const auto r = inject_random(m, tokens, 5, static_cast<std::uint64_t>(trial));
    wins += t.layer_stiv.front() >= r.layer_stiv.front() ? 1 : 0;
  }
  EXPECT_GE(wins, 36);
}

TEST(Injection, StealthRespectsConstraintsAndNeverBeatsTargeted) {
  const StackedModel m = token_model(LayerKind::Lti, 10);
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(10, trial);
    const auto tokens = random_tokens(rng, 40);
    InjectionOptions opt;
    opt.similarity_floor = 0.75;
    const auto s = greedy_edits(m, tokens, 8, opt);
    std::vector<int> pos;
    for (const auto& e : s) pos.push_back(e.position);
    std::sort(pos.begin(), pos.end());
    for (std::size_t i = 1; i < pos.size(); ++i) EXPECT_GE(pos[i] - pos[i - 1], 2);
    const FirstLayerScorer scorer(m, tokens, 0.1);
    EXPECT_LE(scorer.stiv_of(s), scorer.stiv_of(greedy_edits(m, tokens, 8)) + 1e-15);
  }
}

TEST(Injection, InfeasibleStealthIsReported) {
  const StackedModel m = token_model(LayerKind::Lti, 11);
  const std::vector<int> tokens(10, 1);
  try {
    inject_stealth(m, tokens, 3, 0.9);
    FAIL() << "expected infeasible-stealth";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfeasibleStealth);
  }
  EXPECT_THROW(inject_stealth(m, tokens, 6, 0.1), Error);  // 6 non-adjacent slots need 11 steps
}

TEST(Injection, RandomEditsAreDistinctSubstitutions) {
  Rng rng(12, 0);
  const auto tokens = random_tokens(rng, 30);
  const auto edits = random_edits(tokens, 30, 4, 5);
  std::set<int> pos;
  for (const auto& e : edits) {
    pos.insert(e.position);
    EXPECT_NE(e.token, tokens[static_cast<std::size_t>(e.position)]);
    EXPECT_GE(e.token, 0);
    EXPECT_LT(e.token, 4);
  }
  EXPECT_EQ(pos.size(), 30u);
  const auto adv = apply_edits(tokens, edits);
  for (std::size_t i = 0; i < tokens.size(); ++i) EXPECT_NE(adv[i], tokens[i]);
}

TEST(Injection, ZeroBudgetIsClean) {
  const StackedModel m = token_model(LayerKind::Lti, 13);
  Rng rng(13, 0);
  const auto tokens = random_tokens(rng, 20);
  const auto r = inject_targeted(m, tokens, 0);
  EXPECT_EQ(r.stiv, 0.0);
  EXPECT_EQ(r.delta_y_norm, 0.0);
  EXPECT_TRUE(r.positions.empty());
}

TEST(Pgd, RespectsBudgetAndZeroBallIsClean) {
  Rng rng(14, 0);
  const StackedModel m = testkit::random_small_model(rng, false);
  const RowMat x = testkit::random_sequence(rng, 24, m.d_in);
  const auto r = pgd_output_attack(m, x, 0.05, 20, 3);
  EXPECT_TRUE(r.budget_respected());
  EXPECT_LE(r.delta.cwiseAbs().maxCoeff(), 0.05 + 1e-15);
  EXPECT_GE(r.objective_final, r.objective_initial);
  const auto z = pgd_output_attack(m, x, 0.0, 5, 3);
  EXPECT_EQ(z.delta_y_norm, 0.0);
  const auto u = random_output_perturbation(m, x, 0.05, 4);
  EXPECT_TRUE(u.budget_respected());
}

TEST(Pgd, BeatsRandomOnAverage) {
  double pgd = 0.0, rnd = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(15, s);
    const StackedModel m = testkit::random_small_model(rng, false);
    const RowMat x = testkit::random_sequence(rng, 24, m.d_in);
    pgd += pgd_output_attack(m, x, 0.05, 20, s).delta_y_norm;
    rnd += random_output_perturbation(m, x, 0.05, s).delta_y_norm;
  }
  EXPECT_GT(pgd, rnd);
}

TEST(Selection, FreezeLowersGateSum) {
  ModelSpec s;
  s.d_in = 1;
  s.d_model = 4;
  s.n_state = 3;
  s.n_layers = 2;
  s.kinds = {LayerKind::Selective, LayerKind::Selective};
  s.sel_a_min = 0.5;
  s.sel_a_max = 2.0;
  const StackedModel m = init_model(s, 16);
  Rng rng(16, 0);
  const RowMat x = testkit::random_sequence(rng, 32, 1);
  const auto f = selection_subversion(m, x, 0.05, GateMode::Freeze, 40, 1);
  EXPECT_LT(f.gate_sum_adv, f.gate_sum_clean);
  const auto e = selection_subversion(m, x, 0.05, GateMode::Erase, 40, 1);
  EXPECT_GT(e.gate_sum_adv, e.gate_sum_clean);
}

TEST(Selection, PureLtiModelIsInapplicable) {
  Rng rng(17, 0);
  ModelSpec s;
  s.d_in = 1;
  s.d_model = 3;
  s.n_state = 2;
  s.n_layers = 2;
  s.kinds = {LayerKind::Lti, LayerKind::Lti};
  const StackedModel m = init_model(s, 17);
  try {
    selection_subversion(m, testkit::random_sequence(rng, 10, 1), 0.01, GateMode::Freeze);
    FAIL() << "expected inapplicable-attack";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InapplicableAttack);
  }
}

TEST(Haystack, EntropyTargetsAndNeedlePlacement) {
  const std::vector<int> needle{127, 126, 125, 124, 123};
  for (const HaystackMode mode : {HaystackMode::Benign, HaystackMode::Low, HaystackMode::High}) {
    for (const double pos : {0.1, 0.5}) {
      const Haystack h = make_haystack(2000, needle, pos, mode, -1.0, 128, 3);
      ASSERT_EQ(h.tokens.size(), 2000u);
      EXPECT_NEAR(h.entropy, h.target, 0.2) << to_string(mode);
      EXPECT_NEAR(h.entropy, token_entropy(h.tokens, 128), 1e-12);
      for (std::size_t k = 0; k < needle.size(); ++k)
        EXPECT_EQ(h.tokens[static_cast<std::size_t>(h.needle_position) + k], needle[k]);
      EXPECT_NEAR(static_cast<double>(h.needle_position) / 2000.0, pos, 0.01);
    }
  }
  EXPECT_NEAR(default_entropy_target(HaystackMode::Low), 1.8, 1e-12);
  EXPECT_NEAR(default_entropy_target(HaystackMode::Benign), 4.2, 1e-12);
}

TEST(Haystack, UnreachableEntropyIsReported) {
  EXPECT_THROW(make_haystack(500, {3}, 0.5, HaystackMode::High, 9.0, 16, 1), Error);
}

TEST(Extraction, QueryCountsFollowPowerLaws) {
  for (const int n : {1, 2, 8, 64, 1024}) {
    EXPECT_EQ(ssd_query_count(n), static_cast<long long>(n) * n);
    EXPECT_EQ(generic_query_count(n), static_cast<long long>(n) * n * n);
  }
}

TEST(Extraction, NoiseFreeRecovery) {
  for (const int n : {1, 8}) {
    Rng rng(18, static_cast<std::uint64_t>(n));
    Vec a(n);
    for (int i = 0; i < n; ++i) a(i) = rng.uniform(0.2, 0.9);
    Mat b(n, 1), c(1, n);
    for (int i = 0; i < n; ++i) {
      b(i, 0) = rng.normal();
      c(0, i) = rng.normal();
    }
    const DiscreteSsm sys = DiscreteSsm::real_diagonal(a, b, c, Mat::Zero(1, 1));
    CountingOracle o1(sys);
    const ExtractionResult ssd = ssd_extract(o1, n, 0.01);
    EXPECT_EQ(ssd.query_count, ssd_query_count(n));
    EXPECT_EQ(o1.queries(), ssd.query_count);
    EXPECT_LE(ssd.relative_error, 1e-6);
    EXPECT_LE(impulse_response_error(sys, ssd.a_hat, ssd.b_hat, ssd.c_hat, 64), 1e-6);
  }
}

TEST(Extraction, GenericNoiseFreeRecovery) {
  for (const int n : {2, 8}) {
    Rng rng(19, static_cast<std::uint64_t>(n));
    Vec a(n);
    for (int i = 0; i < n; ++i) a(i) = rng.uniform(0.2, 0.9);
    const DiscreteSsm sys = DiscreteSsm::real_diagonal(a, Mat::Ones(n, 1), Mat::Random(1, n), Mat::Zero(1, 1));
    CountingOracle oracle(sys);
    const ExtractionResult gen = generic_extract(oracle, n, 0.01, 5);
    EXPECT_EQ(gen.query_count, generic_query_count(n));
    EXPECT_LE(gen.relative_error, 1e-6);
  }
}

TEST(Extraction, GenericIsUnderdeterminedAtOneState) {
  // One probe cannot fit two Markov parameters.
  const DiscreteSsm sys = DiscreteSsm::real_diagonal(Vec::Constant(1, 0.5), Mat::Ones(1, 1), Mat::Ones(1, 1),
                                                     Mat::Zero(1, 1));
  CountingOracle oracle(sys);
  try {
    generic_extract(oracle, 1, 0.01, 5);
    FAIL() << "expected recovery-failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RecoveryFailure);
  }
}

TEST(Logging, AttackLogLineHasRequiredKeys) {
  PerturbationRecord r;
  r.seq_id = "s1";
  r.strategy = "targeted";
  r.budget = 3;
  r.positions = {4, 9};
  const std::string line = attack_log_line(r);
  for (const char* key : {"\"seq_id\"", "\"strategy\"", "\"budget\"", "\"stiv\"", "\"delta_y_norm\"", "\"positions\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  EXPECT_EQ(line.find('\n'), std::string::npos);
}
