#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/grad.hpp"
#include "ssmsec/model.hpp"
#include "ssmsec/record.hpp"

#include <cstdint>
#include <functional>

namespace ssmsec {

// Returns the objective at x and writes its gradient into *grad.
using ObjectiveFn = std::function<double(const RowMat& x, RowMat* grad)>;

struct PgdOptions {
  double epsilon = 0.0;
  int steps = 20;
  double step_size = 0.0;  // <= 0 selects epsilon / 4
  bool maximize = true;
  bool random_start = false;
  std::uint64_t seed = 0;
};

struct PgdResult {
  RowMat delta;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> trace;
  bool reverted = false;
};

// l_inf-ball PGD with sign steps. The delta is clipped to [-eps, eps] after every
// step. If the final objective is worse than the starting one the starting
// point is returned.
PgdResult pgd(const ObjectiveFn& objective, const RowMat& x, const PgdOptions& opt);

// PGD on a model's continuous input (raw reals or embedded tokens) against a loss.
PerturbationRecord pgd(const StackedModel& model, const RowMat& x, const LossSpec& objective, const PgdOptions& opt);

}  // namespace ssmsec
