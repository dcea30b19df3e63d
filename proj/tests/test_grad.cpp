#include "ssmsec/grad.hpp"
#include "testkit.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssmsec;

namespace {

StackedModel tiny_model(LayerKind kind, bool tokens, std::uint64_t seed) {
  ModelSpec s;
  s.d_model = 3;
  s.n_state = 2;
  s.n_layers = 2;
  s.kinds = {kind, kind};
  if (tokens) s.alphabet_size = 4;
  s.sel_a_min = 0.2;
  s.sel_a_max = 1.0;
  return init_model(s, seed);
}

}  // namespace

TEST(Gradient, FiniteDifferenceSuite) {
  const testkit::GradientSuite g = testkit::gradient_suite(12, 99);
  EXPECT_EQ(g.cases, 12);
  EXPECT_LE(g.worst_param_error, 1e-4);
  EXPECT_LE(g.worst_input_error, 1e-4);
}

TEST(Gradient, ParameterViewsCoverEveryParameter) {
  StackedModel m = tiny_model(LayerKind::Selective, true, 1);
  Eigen::Index total = 0;
  for (const auto& v : parameter_views(m)) total += v.size;
  EXPECT_EQ(total, parameter_count(m));
  StackedModel z = zeros_like(m);
  for (const auto& v : parameter_views(z))
    for (Eigen::Index i = 0; i < v.size; ++i) EXPECT_EQ(v.data[i], 0.0) << v.name;
}

TEST(Gradient, BlockMatching) {
  EXPECT_TRUE(block_matches("layers.0.a_log", "a_log"));
  EXPECT_TRUE(block_matches("layers.0.a_log", "layers.0"));
  EXPECT_TRUE(block_matches("embedding", "embedding"));
  EXPECT_FALSE(block_matches("layers.10.b", "layers.1"));
  EXPECT_FALSE(block_matches("readout.w", ""));
}

TEST(Gradient, FrozenBlocksGetZeroGradient) {
  const StackedModel m = tiny_model(LayerKind::Lti, true, 2);
  const Example ex{{0, 1, 2, 3, 1}, {}, LossSpec::cross_entropy(1)};
  ModelGradient g = grad_params(m, {ex}, {"embedding", "layers.1"});
  for (const auto& v : parameter_views(g.grad)) {
    if (v.name == "embedding" || v.name.rfind("layers.1.", 0) == 0) {
      for (Eigen::Index i = 0; i < v.size; ++i) EXPECT_EQ(v.data[i], 0.0) << v.name;
    }
  }
  double other = 0.0;
  for (const auto& v : parameter_views(g.grad))
    if (v.name.rfind("layers.0.", 0) == 0)
      for (Eigen::Index i = 0; i < v.size; ++i) other += std::abs(v.data[i]);
  EXPECT_GT(other, 0.0);
}

TEST(Gradient, BatchGradientIsMeanOfExamples) {
  const StackedModel m = tiny_model(LayerKind::Selective, true, 3);
  const Example a{{0, 1, 2}, {}, LossSpec::cross_entropy(0)};
  const Example b{{3, 3, 1, 0}, {}, LossSpec::cross_entropy(1, 0.5)};
  ModelGradient ga = grad_params(m, {a}), gb = grad_params(m, {b}), gab = grad_params(m, {a, b});
  EXPECT_NEAR(gab.loss, 0.5 * (ga.loss + gb.loss), 1e-12);
  auto va = parameter_views(ga.grad), vb = parameter_views(gb.grad), vab = parameter_views(gab.grad);
  for (std::size_t k = 0; k < vab.size(); ++k)
    for (Eigen::Index i = 0; i < vab[k].size; ++i)
      EXPECT_NEAR(vab[k].data[i], 0.5 * (va[k].data[i] + vb[k].data[i]), 1e-12);
}

TEST(Loss, StateDecayPenaltyIsMeanSquaredStateNorm) {
  const StackedModel m = tiny_model(LayerKind::Lti, false, 4);
  RowMat x = RowMat::Random(6, 1);
  const ForwardPass fp = forward_continuous(m, x);
  const LossParts with = evaluate_loss(fp, LossSpec::cross_entropy(0, 0.5));
  const LossParts without = evaluate_loss(fp, LossSpec::cross_entropy(0));
  double sum = 0.0;
  int count = 0;
  for (const auto& layer : fp.layers)
    for (Eigen::Index t = 1; t < layer.traj.states.rows(); ++t, ++count) sum += layer.traj.states.row(t).squaredNorm();
  EXPECT_NEAR(with.penalty, 0.5 * sum / count, 1e-12);
  EXPECT_NEAR(with.total - without.total, with.penalty, 1e-12);
}

TEST(Loss, CrossEntropyOfUniformLogits) {
  const StackedModel m0 = tiny_model(LayerKind::Lti, true, 5);
  StackedModel m = m0;
  m.readout.setZero();
  m.readout_bias.setZero();
  const ForwardPass fp = forward_embedded(m, embed_tokens(m, {1, 2}));
  EXPECT_NEAR(evaluate_loss(fp, LossSpec::cross_entropy(1)).total, std::log(2.0), 1e-12);
}
