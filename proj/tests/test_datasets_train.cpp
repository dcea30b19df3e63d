#include "ssmsec/datasets.hpp"
#include "ssmsec/serialize.hpp"
#include "ssmsec/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace ssmsec;

namespace {

ModelSpec small_real_spec() {
  ModelSpec s;
  s.d_in = 1;
  s.d_model = 4;
  s.n_state = 4;
  s.n_layers = 2;
  s.kinds = {LayerKind::Lti, LayerKind::Lti};
  s.pooling = Pooling::Mean;
  s.residual = false;
  s.feedthrough = false;
  s.dt_min = 0.05;
  s.dt_max = 0.5;
  s.decay_scale = 0.2;
  return s;
}

}  // namespace

TEST(Genomic, BalancedAndMotifLabelsExact) {
  const DatasetSplit d = gen_genomic_dataset(200, 80, 7, 60);
  EXPECT_EQ(d.train.size() + d.test.size(), 200u);
  EXPECT_EQ(d.test.size(), 60u);
  const auto motif = encode_tokens(kDefaultMotif, kGenomicAlphabet);
  int positives = 0;
  for (const Dataset* part : {&d.train, &d.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      EXPECT_EQ(part->tokens[i].size(), 80u);
      EXPECT_EQ(contains_motif(part->tokens[i], motif), part->labels[i] == 1);
      positives += part->labels[i];
    }
  }
  EXPECT_EQ(positives, 100);
}

TEST(Genomic, DeterministicPerSeed) {
  const DatasetSplit a = gen_genomic_dataset(40, 30, 11, 10), b = gen_genomic_dataset(40, 30, 11, 10);
  const DatasetSplit c = gen_genomic_dataset(40, 30, 12, 10);
  EXPECT_EQ(a.train.tokens, b.train.tokens);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_NE(a.train.tokens, c.train.tokens);
}

TEST(Genomic, MotifLongerThanSequenceIsRejected) {
  EXPECT_THROW(gen_genomic_dataset(10, 4, 1, 2), Error);
}

TEST(Tokens, EncodeDecodeRoundTrip) {
  const auto t = encode_tokens("GATTACA", kGenomicAlphabet);
  EXPECT_EQ(t, (std::vector<int>{2, 0, 3, 3, 0, 1, 0}));
  EXPECT_EQ(decode_tokens(t, kGenomicAlphabet), "GATTACA");
  EXPECT_THROW(encode_tokens("GATN", kGenomicAlphabet), Error);
}

TEST(MeanSign, LabelsFollowTheShift) {
  const DatasetSplit d = gen_mean_sign_dataset(400, 256, 3, 100, 0.5);
  int agree = 0;
  for (std::size_t i = 0; i < d.train.size(); ++i) agree += (d.train.reals[i].mean() > 0) == (d.train.labels[i] == 1);
  // The shift is 0.5 against a per-step sd of 1 over 256 steps, so the sample mean almost always has the right sign.
  EXPECT_GE(agree, static_cast<int>(d.train.size()) - 2);
}

TEST(Training, DeterministicAndLearnsMeanSign) {
  const DatasetSplit d = gen_mean_sign_dataset(300, 64, 5, 100, 0.5);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 5;
  const TrainResult a = train_classifier(init_model(small_real_spec(), 5), d.train, cfg);
  const TrainResult b = train_classifier(init_model(small_real_spec(), 5), d.train, cfg);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_GE(accuracy(a.model, d.test), 0.8);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
}

TEST(Training, MajorityTokenIsLearnedWithinTenEpochs) {
  const Dataset d = gen_majority_dataset(200, 64, 4, 3);
  ModelSpec s;
  s.alphabet_size = 4;
  s.d_model = 8;
  s.n_state = 8;
  s.n_layers = 1;
  s.pooling = Pooling::Mean;
  s.dt_min = 0.05;
  s.dt_max = 0.5;
  TrainConfig cfg;
  cfg.epochs = 10;
  EXPECT_GE(train_classifier(init_model(s, 3), d, cfg).train_accuracy, 0.95);
}

TEST(Training, StateDecayShrinksFinalStates) {
  const DatasetSplit d = gen_mean_sign_dataset(200, 64, 6, 50, 0.5);
  TrainConfig loose, tight;
  loose.epochs = tight.epochs = 3;
  tight.state_decay = 0.5;
  const TrainResult a = train_classifier(init_model(small_real_spec(), 6), d.train, loose);
  const TrainResult b = train_classifier(init_model(small_real_spec(), 6), d.train, tight);
  EXPECT_LT(mean_final_state_norm(b.model, d.test), mean_final_state_norm(a.model, d.test));
}

TEST(Training, FrozenBlocksDoNotMove) {
  const DatasetSplit d = gen_mean_sign_dataset(64, 32, 7, 16);
  const StackedModel m0 = init_model(small_real_spec(), 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.frozen = {"layers.0"};
  const TrainResult r = train_classifier(m0, d.train, cfg);
  EXPECT_EQ(r.model.layers[0].lti.b, m0.layers[0].lti.b);
  EXPECT_EQ(r.model.layers[0].lti.log_neg_a, m0.layers[0].lti.log_neg_a);
  EXPECT_NE(r.model.readout, m0.readout);
}

TEST(Training, GradientClippingBoundsTheFirstStep) {
  const DatasetSplit d = gen_mean_sign_dataset(16, 32, 8, 4);
  const StackedModel m0 = init_model(small_real_spec(), 8);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.learning_rate = 1.0;
  cfg.clip_norm = 1e-3;
  StackedModel moved = train_classifier(m0, d.train, cfg).model;
  StackedModel start = m0;
  double sq = 0.0;
  auto after = parameter_views(moved), before = parameter_views(start);
  for (std::size_t k = 0; k < after.size(); ++k)
    for (Eigen::Index i = 0; i < after[k].size; ++i) sq += std::pow(after[k].data[i] - before[k].data[i], 2);
  EXPECT_LE(std::sqrt(sq), 1e-3 * (1.0 + 1e-9));
  cfg.clip_norm = -1.0;
  EXPECT_THROW(train_classifier(m0, d.train, cfg), Error);
}

TEST(Serialize, BinaryRoundTripIsExact) {
  ModelSpec s = small_real_spec();
  s.kinds = {LayerKind::Selective, LayerKind::Lti};
  const StackedModel m = init_model(s, 9);
  std::stringstream buf;
  save_model(m, buf);
  const StackedModel r = load_model(buf);
  StackedModel a = m, b = r;
  auto va = parameter_views(a), vb = parameter_views(b);
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t k = 0; k < va.size(); ++k) {
    EXPECT_EQ(va[k].name, vb[k].name);
    for (Eigen::Index i = 0; i < va[k].size; ++i) EXPECT_EQ(va[k].data[i], vb[k].data[i]);
  }
  EXPECT_EQ(r.pooling, m.pooling);
  EXPECT_EQ(r.residual, m.residual);
  EXPECT_EQ(r.seed, m.seed);
  EXPECT_NE(dump_model_json(r).find("\"params\""), std::string::npos);
}

TEST(Serialize, CorruptInputIsRejected) {
  std::stringstream bad("not a model file");
  EXPECT_THROW(load_model(bad), Error);
}
