#include "ssmsec/grad.hpp"

#include <cmath>

namespace ssmsec {

LossSpec LossSpec::cross_entropy(int label, double state_decay) {
  LossSpec s;
  s.kind = Kind::CrossEntropy;
  s.label = label;
  s.state_decay = state_decay;
  return s;
}

LossSpec LossSpec::squared_error(Vec target) {
  LossSpec s;
  s.kind = Kind::SquaredError;
  s.target = std::move(target);
  return s;
}

LossSpec LossSpec::linear(Vec weights) {
  LossSpec s;
  s.kind = Kind::Linear;
  s.weights = std::move(weights);
  return s;
}

LossSpec LossSpec::gate_sum(double weight) {
  LossSpec s;
  s.kind = Kind::None;
  s.gate_weight = weight;
  return s;
}

namespace {

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// Task loss and its gradient w.r.t. the logits.
double task_loss(const Vec& logits, const LossSpec& loss, Vec* dlogits) {
  switch (loss.kind) {
    case LossSpec::Kind::None:
      if (dlogits) *dlogits = Vec::Zero(logits.size());
      return 0.0;
    case LossSpec::Kind::CrossEntropy: {
      require(loss.label >= 0 && loss.label < logits.size(), ErrorKind::InvalidArgument, "label out of range");
      const double lse = log_sum_exp(logits);
      if (dlogits) {
        *dlogits = (logits.array() - lse).exp();
        (*dlogits)(loss.label) -= 1.0;
      }
      return lse - logits(loss.label);
    }
    case LossSpec::Kind::SquaredError: {
      require(loss.target.size() == logits.size(), ErrorKind::Shape, "target size mismatch");
      const Vec r = logits - loss.target;
      if (dlogits) *dlogits = 2.0 * r;
      return r.squaredNorm();
    }
    case LossSpec::Kind::Linear:
      require(loss.weights.size() == logits.size(), ErrorKind::Shape, "weight size mismatch");
      if (dlogits) *dlogits = loss.weights;
      return loss.weights.dot(logits);
  }
  return 0.0;
}

double penalty_scale(const ForwardPass& fp) {
  const double steps = static_cast<double>(fp.x0.rows());
  return 1.0 / (static_cast<double>(fp.layers.size()) * steps);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void lti_backward(const LtiLayer& p, const LayerCache& cache, const RowMat& dy, double pen, double scale,
                  LtiLayer* g, RowMat& dx) {
  const DiscreteSsm& sys = *cache.lti;
  const RowMat& h = cache.traj.states;
  const Eigen::Index steps = dy.rows();
  const int n = p.n_state();
  const Vec& abar = sys.a_real();

  RowMat gh = dy * p.c;  // T x N
  if (pen != 0.0) gh += pen * h.bottomRows(steps);
  for (Eigen::Index t = steps - 2; t >= 0; --t) gh.row(t) += abar.transpose().cwiseProduct(gh.row(t + 1));

  dx.noalias() += gh * sys.b_bar() + dy * p.d;
  if (!g) return;

  const Mat dbbar = gh.transpose() * cache.x_in;  // N x D
  g->c.noalias() += scale * (dy.transpose() * h.bottomRows(steps));
  g->d.noalias() += scale * (dy.transpose() * cache.x_in);
  const Vec dabar = gh.cwiseProduct(h.topRows(steps)).colwise().sum().transpose();

  const double step = std::exp(p.log_step);
  double dstep = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = -std::exp(p.log_neg_a(i));
    const double ab = std::exp(step * a);
    const double phi = std::expm1(step * a) / a;
    const double dphi = dbbar.row(i).dot(p.b.row(i));
    g->b.row(i) += scale * phi * dbbar.row(i);
    const double da = dabar(i) * step * ab + dphi * (step * ab - phi) / a;
    g->log_neg_a(i) += scale * da * a;
    dstep += dabar(i) * a * ab + dphi * ab;
  }
  g->log_step += scale * dstep * step;
}

void selective_backward(const SelectiveSsm& s, const LayerCache& cache, const RowMat& dy, double pen, double gate_w,
                        double scale, SelectiveSsm* g, RowMat& dx) {
  const RowMat& h = cache.traj.states;
  const RowMat& x = cache.x_in;
  const Eigen::Index steps = dy.rows();
  const int n = s.n_state();
  const int dch = s.channels();

  RowMat gz(steps, n);
  RowMat gbb(steps, n);
  Vec carry = Vec::Zero(n * dch);
  Vec gabar(n);
  Mat dc = Mat::Zero(dch, n);
  Vec dd = Vec::Zero(dch);
  Vec da_log = Vec::Zero(n);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    gabar.setZero();
    gbb.row(t).setZero();
    for (int ch = 0; ch < dch; ++ch) {
      const double dyc = dy(t, ch);
      const double xc = x(t, ch);
      double gx = s.d(ch) * dyc;
      dd(ch) += dyc * xc;
      for (int k = 0; k < n; ++k) {
        const int idx = ch * n + k;
        double ghv = s.c(ch, k) * dyc + pen * h(t + 1, idx);
        if (t + 1 < steps) ghv += cache.a_bar(t + 1, k) * carry(idx);
        carry(idx) = ghv;
        gabar(k) += ghv * h(t, idx);
        gbb(t, k) += ghv * xc;
        gx += ghv * cache.b_bar(t, k);
        dc(ch, k) += dyc * h(t + 1, idx);
      }
      dx(t, ch) += gx;
    }
    for (int k = 0; k < n; ++k) {
      const double e = std::exp(cache.delta(t, k));
      const double ab = cache.a_bar(t, k);
      da_log(k) += gabar(k) * (-e * ab);
      const double gdelta = gabar(k) * (-s.a_log(k) * ab) * e + gate_w;
      gz(t, k) = gdelta * sigmoid(cache.pre(t, k));
    }
  }
  dx.noalias() += gz * s.w_delta + gbb * s.w_b;
  if (!g) return;
  g->a_log += scale * da_log;
  g->w_delta.noalias() += scale * (gz.transpose() * x);
  g->b_delta += scale * gz.colwise().sum().transpose();
  g->w_b.noalias() += scale * (gbb.transpose() * x);
  g->c += scale * dc;
  g->d += scale * dd;
}

}  // namespace

LossParts evaluate_loss(const ForwardPass& fp, const LossSpec& loss) {
  LossParts parts;
  parts.task = task_loss(fp.logits, loss, nullptr);
  if (loss.state_decay != 0.0) {
    double acc = 0.0;
    for (const auto& l : fp.layers) acc += l.traj.states.bottomRows(l.traj.steps()).squaredNorm();
    parts.penalty = loss.state_decay * penalty_scale(fp) * acc;
  }
  if (loss.gate_weight != 0.0) parts.gate = loss.gate_weight * fp.gate_sum();
  parts.total = parts.task + parts.penalty + parts.gate;
  return parts;
}

std::vector<ParamView> parameter_views(StackedModel& m) {
  std::vector<ParamView> v;
  auto add = [&](std::string name, auto& block) { v.push_back(ParamView{std::move(name), block.data(), block.size()}); };
  if (m.token_input()) {
    add("embedding", m.embedding);
  } else {
    add("encoder.w", m.encoder);
    add("encoder.b", m.encoder_bias);
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    ModelLayer& l = m.layers[i];
    if (l.kind == LayerKind::Lti) {
      add(p + "log_neg_a", l.lti.log_neg_a);
      v.push_back(ParamView{p + "log_step", &l.lti.log_step, 1});
      add(p + "b", l.lti.b);
      add(p + "c", l.lti.c);
      add(p + "d", l.lti.d);
    } else {
      add(p + "a_log", l.selective.a_log);
      add(p + "w_delta", l.selective.w_delta);
      add(p + "b_delta", l.selective.b_delta);
      add(p + "w_b", l.selective.w_b);
      add(p + "c", l.selective.c);
      add(p + "d", l.selective.d);
    }
  }
  add("readout.w", m.readout);
  add("readout.b", m.readout_bias);
  return v;
}

Eigen::Index parameter_count(const StackedModel& model) {
  StackedModel copy = model;
  Eigen::Index n = 0;
  for (const auto& v : parameter_views(copy)) n += v.size;
  return n;
}

StackedModel zeros_like(const StackedModel& model) {
  StackedModel z = model;
  for (auto& v : parameter_views(z)) std::fill(v.data, v.data + v.size, 0.0);
  return z;
}

bool block_matches(const std::string& block, const std::string& entry) {
  if (entry.empty()) return false;
  if (block == entry) return true;
  if (block.size() > entry.size() && block.compare(0, entry.size(), entry) == 0 && block[entry.size()] == '.')
    return true;
  const auto dot = block.rfind('.');
  return dot != std::string::npos && block.compare(dot + 1, std::string::npos, entry) == 0;
}

double backward(const StackedModel& model, const ForwardPass& fp, const LossSpec& loss, const std::vector<int>* tokens,
                const RowMat* reals, double scale, StackedModel* pg, RowMat* d_x0) {
  Vec dlogits;
  task_loss(fp.logits, loss, &dlogits);
  const Eigen::Index steps = fp.x0.rows();
  const int dm = model.d_model;
  const double pen = 2.0 * loss.state_decay * penalty_scale(fp);

  if (pg) {
    pg->readout.noalias() += scale * dlogits * fp.pooled.transpose();
    pg->readout_bias += scale * dlogits;
  }
  const Vec dpooled = model.readout.transpose() * dlogits;
  RowMat dx = RowMat::Zero(steps, dm);
  if (model.pooling == Pooling::Last) {
    dx.row(steps - 1) = dpooled.transpose();
  } else {
    dx.rowwise() += dpooled.transpose() / static_cast<double>(steps);
  }

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const ModelLayer& layer = model.layers[li];
    const LayerCache& cache = fp.layers[li];
    RowMat dy = dx;
    if (model.activation == Activation::Gelu)
      dy.array() *= cache.y.unaryExpr([](double v) { return gelu_grad(v); }).array();
    RowMat dx_in = model.residual ? dx : RowMat::Zero(steps, dm);
    if (layer.kind == LayerKind::Lti) {
      lti_backward(layer.lti, cache, dy, pen, scale, pg ? &pg->layers[li].lti : nullptr, dx_in);
    } else {
      selective_backward(layer.selective, cache, dy, pen, loss.gate_weight, scale,
                         pg ? &pg->layers[li].selective : nullptr, dx_in);
    }
    dx = std::move(dx_in);
  }

  if (pg) {
    if (model.token_input()) {
      if (tokens)
        for (Eigen::Index t = 0; t < steps; ++t) pg->embedding.row((*tokens)[static_cast<std::size_t>(t)]) += scale * dx.row(t);
    } else if (reals) {
      pg->encoder.noalias() += scale * (dx.transpose() * (*reals));
      pg->encoder_bias += scale * dx.colwise().sum().transpose();
    }
  }
  if (d_x0) *d_x0 = std::move(dx);

  return evaluate_loss(fp, loss).total;
}

ForwardPass forward_continuous(const StackedModel& model, const RowMat& x) {
  return model.token_input() ? forward_embedded(model, x) : forward_embedded(model, encode_reals(model, x));
}

InputGradient grad_continuous(const StackedModel& model, const RowMat& x, const LossSpec& loss) {
  ForwardPass fp = forward_continuous(model, x);
  InputGradient out;
  RowMat dx0;
  out.loss = backward(model, fp, loss, nullptr, nullptr, 1.0, nullptr, &dx0);
  out.logits = fp.logits;
  out.grad = model.token_input() ? dx0 : RowMat(dx0 * model.encoder);
  require(out.grad.allFinite() && std::isfinite(out.loss), ErrorKind::GradientOverflow, "input gradient is not finite");
  return out;
}

InputGradient grad_input(const StackedModel& model, const std::vector<int>& tokens, const LossSpec& loss) {
  return grad_continuous(model, embed_tokens(model, tokens), loss);
}

InputGradient grad_input(const StackedModel& model, const RowMat& reals, const LossSpec& loss) {
  require(!model.token_input(), ErrorKind::Encoding, "model expects token input");
  return grad_continuous(model, reals, loss);
}

ModelGradient grad_params(const StackedModel& model, const std::vector<Example>& batch,
                          const std::vector<std::string>& frozen) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "batch must not be empty");
  ModelGradient out{zeros_like(model), 0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (model.token_input()) {
      ForwardPass fp = forward_embedded(model, embed_tokens(model, ex.tokens));
      out.loss += scale * backward(model, fp, ex.loss, &ex.tokens, nullptr, scale, &out.grad, nullptr);
    } else {
      ForwardPass fp = forward_embedded(model, encode_reals(model, ex.reals));
      out.loss += scale * backward(model, fp, ex.loss, nullptr, &ex.reals, scale, &out.grad, nullptr);
    }
  }
  for (auto& v : parameter_views(out.grad)) {
    bool frozen_block = false;
    for (const auto& f : frozen) frozen_block = frozen_block || block_matches(v.name, f);
    if (frozen_block) std::fill(v.data, v.data + v.size, 0.0);
    for (Eigen::Index i = 0; i < v.size; ++i)
      require(std::isfinite(v.data[i]), ErrorKind::GradientOverflow, "parameter gradient is not finite: " + v.name);
  }
  require(std::isfinite(out.loss), ErrorKind::GradientOverflow, "loss is not finite");
  return out;
}

}  // namespace ssmsec
