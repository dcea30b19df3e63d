#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/ssm.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ssmsec {

enum class LayerKind { Lti, Selective };
enum class Activation { Gelu, Identity };
enum class Pooling { Last, Mean };

const char* to_string(LayerKind k);
const char* to_string(Activation a);
const char* to_string(Pooling p);

// Trainable real-diagonal LTI layer: a_i = -exp(log_neg_a_i), step = exp(log_step).
struct LtiLayer {
  Vec log_neg_a;
  double log_step = 0.0;
  Mat b;  // N x D
  Mat c;  // D x N
  Mat d;  // D x D

  int n_state() const { return static_cast<int>(log_neg_a.size()); }
  ContinuousSsm continuous() const;
  DiscreteSsm discretize() const;
};

struct ModelLayer {
  LayerKind kind = LayerKind::Lti;
  LtiLayer lti;
  SelectiveSsm selective;

  int state_width() const;
};

struct StackedModel {
  int d_model = 0;
  int alphabet_size = 0;  // > 0 selects token input through `embedding`
  Mat embedding;          // V x D
  int d_in = 0;           // real input width when alphabet_size == 0
  Mat encoder;            // D x d_in
  Vec encoder_bias;       // D
  std::vector<ModelLayer> layers;
  bool residual = true;
  Activation activation = Activation::Gelu;
  Pooling pooling = Pooling::Last;
  Mat readout;       // K x D
  Vec readout_bias;  // K
  std::uint64_t seed = 0;

  bool token_input() const { return alphabet_size > 0; }
  int n_classes() const { return static_cast<int>(readout.rows()); }
  bool has_selective() const;
  void validate() const;
};

struct ModelSpec {
  int d_model = 128;
  int n_state = 128;
  int n_layers = 4;
  std::vector<LayerKind> kinds;  // empty: all `kind`
  LayerKind kind = LayerKind::Lti;
  int alphabet_size = 0;
  int d_in = 1;
  int n_classes = 2;
  bool residual = true;
  Activation activation = Activation::Gelu;
  Pooling pooling = Pooling::Last;
  // Per-layer step drawn log-uniformly; continuous spectrum is the HiPPO-LegS diagonal scaled by decay_scale.
  double dt_min = 1e-3;
  double dt_max = 1e-1;
  double decay_scale = 1.0;
  // Token embedding e_k = embed_offset * m + embed_scale * v_k with m, v_k standard normal.
  double embed_offset = 0.0;
  double embed_scale = 1.0;
  double b_scale = 1.0;
  // LTI input rows scaled by |a_n|^b_rate_power (renormalized to unit RMS); 0 keeps them i.i.d.
  double b_rate_power = 0.0;
  double c_scale = 1.0;
  double readout_scale = 1.0;
  bool feedthrough = true;
  // Selective gates: a_log drawn log-uniformly in [sel_a_min, sel_a_max].
  double sel_a_min = 1e-3;
  double sel_a_max = 0.5;
  double sel_w_delta_scale = 1.0;
};

StackedModel init_model(const ModelSpec& spec, std::uint64_t seed);

std::vector<int> encode_tokens(const std::string& text, const std::string& alphabet);
std::string decode_tokens(const std::vector<int>& tokens, const std::string& alphabet);

double gelu(double x);
double gelu_grad(double x);

struct LayerCache {
  LayerKind kind = LayerKind::Lti;
  RowMat x_in;  // T x D
  RowMat y;     // T x D, pre-activation
  StateTrajectory traj;
  std::optional<DiscreteSsm> lti;
  RowMat pre;    // selective: gate pre-activation T x N
  RowMat delta;  // selective: softplus(pre)
  RowMat a_bar;
  RowMat b_bar;
};

struct ForwardPass {
  RowMat x0;
  std::vector<LayerCache> layers;
  RowMat x_out;
  Vec pooled;
  Vec logits;

  std::vector<StateTrajectory> trajectories() const;
  double gate_sum() const;
};

RowMat embed_tokens(const StackedModel& model, const std::vector<int>& tokens);
RowMat encode_reals(const StackedModel& model, const RowMat& u);
// Runs the layer stack on an already embedded/encoded T x D sequence.
ForwardPass forward_embedded(const StackedModel& model, const RowMat& x0);
// Same, starting each layer from h0[layer] instead of zero; empty h0 means zeros.
ForwardPass forward_embedded(const StackedModel& model, const RowMat& x0, const std::vector<Vec>& h0);

struct ModelOutput {
  Vec logits;
  std::vector<StateTrajectory> trajectories;
};

ModelOutput forward_model(const StackedModel& model, const std::vector<int>& tokens);
ModelOutput forward_model(const StackedModel& model, const RowMat& reals);
int predict(const StackedModel& model, const std::vector<int>& tokens);
int predict(const StackedModel& model, const RowMat& reals);

}  // namespace ssmsec
