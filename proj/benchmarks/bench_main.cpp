#include "ssmsec/attacks.hpp"
#include "ssmsec/datasets.hpp"
#include "ssmsec/grad.hpp"
#include "ssmsec/spectral.hpp"
#include "testkit.hpp"

#include <benchmark/benchmark.h>

using namespace ssmsec;

static void BM_LtiScan(benchmark::State& state) {
  Rng rng(1, 0);
  const int n = static_cast<int>(state.range(0));
  const DiscreteSsm sys = testkit::random_stable_system(rng, n, 4, true);
  const RowMat u = testkit::random_sequence(rng, 1024, 4);
  for (auto _ : state) benchmark::DoNotOptimize(lti_scan(sys, u));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_LtiScan)->Arg(16)->Arg(64)->Arg(128);

static void BM_ConvKernel(benchmark::State& state) {
  Rng rng(2, 0);
  const DiscreteSsm sys = testkit::random_stable_system(rng, 64, 4, true);
  const int length = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(conv_kernel(sys, length));
}
BENCHMARK(BM_ConvKernel)->Arg(256)->Arg(1024);

static void BM_SelectiveScan(benchmark::State& state) {
  Rng rng(3, 0);
  const int n = static_cast<int>(state.range(0)), d = 8;
  SelectiveSsm sys;
  sys.a_log = Vec::Constant(n, 0.5);
  sys.w_delta = Mat::Random(n, d) * 0.3;
  sys.b_delta = Vec::Zero(n);
  sys.w_b = Mat::Random(n, d);
  sys.c = Mat::Random(d, n);
  sys.d = Vec::Ones(d);
  const RowMat u = testkit::random_sequence(rng, 1024, d);
  for (auto _ : state) benchmark::DoNotOptimize(selective_scan(sys, u));
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_SelectiveScan)->Arg(16)->Arg(64);

static void BM_GainProfile(benchmark::State& state) {
  Rng rng(4, 0);
  const DiscreteSsm sys = testkit::random_stable_system(rng, 32, 2, true);
  const int grid = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gain_profile(sys, grid));
}
BENCHMARK(BM_GainProfile)->Arg(512)->Arg(4096);

static void BM_ParamGradient(benchmark::State& state) {
  Rng rng(5, 0);
  const StackedModel m = testkit::random_small_model(rng, true);
  std::vector<int> tokens(200);
  for (auto& t : tokens) t = static_cast<int>(rng.uniform_int(4));
  const LossSpec loss = LossSpec::cross_entropy(1);
  for (auto _ : state) {
    StackedModel g = zeros_like(m);
    ForwardPass fp = forward_embedded(m, embed_tokens(m, tokens));
    benchmark::DoNotOptimize(backward(m, fp, loss, &tokens, nullptr, 1.0, &g, nullptr));
  }
}
BENCHMARK(BM_ParamGradient);

static void BM_GreedyEdits(benchmark::State& state) {
  ModelSpec s;
  s.alphabet_size = 4;
  s.d_model = 32;
  s.n_state = 32;
  s.n_layers = 2;
  const StackedModel m = init_model(s, 6);
  const DatasetSplit d = gen_genomic_dataset(20, 200, 6, 10);
  const int budget = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(greedy_edits(m, d.test.tokens[0], budget));
}
BENCHMARK(BM_GreedyEdits)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_SsdExtract(benchmark::State& state) {
  Rng rng(7, 0);
  const int n = static_cast<int>(state.range(0));
  Vec a(n);
  for (int i = 0; i < n; ++i) a(i) = rng.uniform(-0.9, 0.9);
  const DiscreteSsm sys = DiscreteSsm::real_diagonal(a, Mat::Random(n, 1), Mat::Random(1, n), Mat::Zero(1, 1));
  for (auto _ : state) {
    CountingOracle oracle(sys);
    benchmark::DoNotOptimize(ssd_extract(oracle, n, 0.01));
  }
}
BENCHMARK(BM_SsdExtract)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
