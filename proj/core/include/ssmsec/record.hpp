#pragma once

#include "ssmsec/common.hpp"

#include <string>
#include <vector>

namespace ssmsec {

struct PerturbationRecord {
  std::string strategy;
  std::string seq_id;
  double budget = 0.0;  // positions B for discrete attacks, epsilon for continuous ones
  bool discrete = false;
  std::vector<int> positions;
  std::vector<int> substitutes;
  std::vector<int> adv_tokens;
  RowMat delta;
  double delta_linf = 0.0;
  double delta_l2 = 0.0;
  double delta_y_norm = 0.0;  // ||logits_adv - logits_clean||_2
  double stiv = 0.0;          // mean over layers
  std::vector<double> layer_stiv;
  double objective_initial = 0.0;
  double objective_final = 0.0;
  std::vector<double> trace;  // objective per PGD step

  bool budget_respected() const;
};

}  // namespace ssmsec
