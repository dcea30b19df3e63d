#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/grad.hpp"
#include "ssmsec/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ssmsec {

struct Dataset {
  std::vector<std::vector<int>> tokens;
  std::vector<RowMat> reals;
  std::vector<int> labels;
  std::string alphabet;

  std::size_t size() const { return labels.size(); }
  bool is_tokens() const { return !tokens.empty(); }
  Dataset subset(const std::vector<std::size_t>& idx) const;
  // Continuous model input for item i (embedded tokens or raw reals).
  RowMat continuous_input(const StackedModel& model, std::size_t i) const;
  void validate() const;
};

// Maps an embedded/raw input to a perturbed one before each gradient step.
using InputPerturbation =
    std::function<RowMat(const StackedModel& model, const RowMat& x, const LossSpec& loss, std::size_t step)>;

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 42;
  double state_decay = 0.0;
  double clip_norm = 0.0;  // > 0 rescales each batch gradient to at most this global l2 norm
  std::vector<std::string> frozen;
  InputPerturbation perturbation;  // empty: standard training

  void validate() const;
};

struct TrainResult {
  StackedModel model;
  std::vector<double> loss_curve;  // one entry per SGD step (mean batch loss)
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

TrainResult train_classifier(StackedModel model, const Dataset& data, const TrainConfig& cfg);
double accuracy(const StackedModel& model, const Dataset& data);
// Mean over items and layers of the final-state norm ||h_T||.
double mean_final_state_norm(const StackedModel& model, const Dataset& data);

}  // namespace ssmsec
