#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/model.hpp"

#include <string>
#include <vector>

namespace ssmsec {

struct LossSpec {
  enum class Kind { None, CrossEntropy, SquaredError, Linear };
  Kind kind = Kind::CrossEntropy;
  int label = 0;
  Vec target;   // SquaredError: ||logits - target||^2
  Vec weights;  // Linear: weights . logits
  double state_decay = 0.0;  // adds state_decay * mean_{layer,t} ||h_t||^2
  double gate_weight = 0.0;  // adds gate_weight * sum of selective gates Delta_t

  static LossSpec cross_entropy(int label, double state_decay = 0.0);
  static LossSpec squared_error(Vec target);
  static LossSpec linear(Vec weights);
  static LossSpec gate_sum(double weight);
};

struct LossParts {
  double total = 0.0;
  double task = 0.0;
  double penalty = 0.0;
  double gate = 0.0;
};

LossParts evaluate_loss(const ForwardPass& fp, const LossSpec& loss);

struct ParamView {
  std::string name;
  double* data;
  Eigen::Index size;
};

// Stable block names: "embedding", "encoder.w", "encoder.b", "layers.<i>.<param>", "readout.w", "readout.b".
std::vector<ParamView> parameter_views(StackedModel& model);
Eigen::Index parameter_count(const StackedModel& model);
StackedModel zeros_like(const StackedModel& model);
// Entry matches a block if equal to its name, equal to its last component, or a dotted prefix of it.
bool block_matches(const std::string& block, const std::string& entry);

struct InputGradient {
  double loss = 0.0;
  Vec logits;
  RowMat grad;
};

// Continuous model input: raw reals for encoder models, embedded vectors for token models.
InputGradient grad_continuous(const StackedModel& model, const RowMat& x, const LossSpec& loss);
InputGradient grad_input(const StackedModel& model, const std::vector<int>& tokens, const LossSpec& loss);
InputGradient grad_input(const StackedModel& model, const RowMat& reals, const LossSpec& loss);
ForwardPass forward_continuous(const StackedModel& model, const RowMat& x);

struct Example {
  std::vector<int> tokens;
  RowMat reals;
  LossSpec loss;
};

struct ModelGradient {
  StackedModel grad;  // parameter-shaped
  double loss = 0.0;  // mean loss over the batch
};

ModelGradient grad_params(const StackedModel& model, const std::vector<Example>& batch,
                          const std::vector<std::string>& frozen = {});

// Reverse pass over a cached forward pass. Adds scale * d(loss)/d(params) into
// `param_grad` when non-null and writes d(loss)/d(x0) into `d_x0` when non-null.
// Returns the loss value.
double backward(const StackedModel& model, const ForwardPass& fp, const LossSpec& loss, const std::vector<int>* tokens,
                const RowMat* reals, double scale, StackedModel* param_grad, RowMat* d_x0);

}  // namespace ssmsec
