#include "ssmsec/pgd.hpp"

#include "ssmsec/rng.hpp"

#include <cmath>

namespace ssmsec {

bool PerturbationRecord::budget_respected() const {
  if (discrete) return static_cast<double>(positions.size()) <= budget;
  return delta.size() == 0 || delta.cwiseAbs().maxCoeff() <= budget;
}

namespace {
double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

PgdResult pgd(const ObjectiveFn& objective, const RowMat& x, const PgdOptions& opt) {
  require(opt.epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
  require(opt.steps >= 1, ErrorKind::InvalidArgument, "steps must be >= 1");
  const double eps = opt.epsilon;
  const double eta = opt.step_size > 0.0 ? opt.step_size : eps / 4.0;
  PgdResult res;
  res.delta = RowMat::Zero(x.rows(), x.cols());
  if (opt.random_start && eps > 0.0) {
    Rng rng(opt.seed, 0x9d0);
    for (Eigen::Index i = 0; i < res.delta.size(); ++i) res.delta.data()[i] = rng.uniform(-eps, eps);
  }
  const RowMat start = res.delta;
  RowMat grad;
  res.initial_objective = objective(x + res.delta, &grad);
  res.trace.push_back(res.initial_objective);
  if (eps == 0.0) {
    res.final_objective = res.initial_objective;
    return res;
  }
  const double dir = opt.maximize ? 1.0 : -1.0;
  double value = res.initial_objective;
  for (int s = 0; s < opt.steps; ++s) {
    res.delta = (res.delta + dir * eta * grad.unaryExpr([](double g) { return sign(g); })).cwiseMax(-eps).cwiseMin(eps);
    value = objective(x + res.delta, &grad);
    require(std::isfinite(value), ErrorKind::GradientOverflow, "pgd objective is not finite");
    res.trace.push_back(value);
  }
  const bool worse = opt.maximize ? value < res.initial_objective : value > res.initial_objective;
  if (worse) {
    res.delta = start;
    res.final_objective = res.initial_objective;
    res.reverted = true;
  } else {
    res.final_objective = value;
  }
  return res;
}

PerturbationRecord pgd(const StackedModel& model, const RowMat& x, const LossSpec& objective, const PgdOptions& opt) {
  ObjectiveFn f = [&](const RowMat& xin, RowMat* grad) {
    InputGradient g = grad_continuous(model, xin, objective);
    if (grad) *grad = std::move(g.grad);
    return g.loss;
  };
  PgdResult r = pgd(f, x, opt);
  PerturbationRecord rec;
  rec.strategy = "pgd";
  rec.budget = opt.epsilon;
  rec.delta = r.delta;
  rec.delta_linf = r.delta.size() ? r.delta.cwiseAbs().maxCoeff() : 0.0;
  rec.delta_l2 = r.delta.norm();
  const Vec clean = forward_continuous(model, x).logits;
  const Vec adv = forward_continuous(model, x + r.delta).logits;
  rec.delta_y_norm = (adv - clean).norm();
  rec.objective_initial = r.initial_objective;
  rec.objective_final = r.final_objective;
  rec.trace = std::move(r.trace);
  return rec;
}

}  // namespace ssmsec
