#include "ssmsec/train.hpp"

#include "ssmsec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmsec {

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  out.alphabet = alphabet;
  for (std::size_t i : idx) {
    if (is_tokens()) out.tokens.push_back(tokens[i]);
    else out.reals.push_back(reals[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

RowMat Dataset::continuous_input(const StackedModel& model, std::size_t i) const {
  return is_tokens() ? embed_tokens(model, tokens[i]) : reals[i];
}

void Dataset::validate() const {
  require(!labels.empty(), ErrorKind::InvalidArgument, "dataset is empty");
  require(is_tokens() ? tokens.size() == labels.size() : reals.size() == labels.size(), ErrorKind::Shape,
          "dataset inputs and labels differ in length");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, ErrorKind::Config, "learning rate must be > 0");
  require(epochs >= 1, ErrorKind::Config, "epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::Config, "batch size must be >= 1");
  require(state_decay >= 0.0, ErrorKind::Config, "state decay must be >= 0");
  require(clip_norm >= 0.0, ErrorKind::Config, "clip norm must be >= 0");
}

namespace {

void sgd_step(StackedModel& model, StackedModel& grad, double lr) {
  auto pv = parameter_views(model);
  auto gv = parameter_views(grad);
  for (std::size_t b = 0; b < pv.size(); ++b)
    for (Eigen::Index i = 0; i < pv[b].size; ++i) pv[b].data[i] -= lr * gv[b].data[i];
  // a_log must stay positive for the gate to remain a contraction.
  for (auto& l : model.layers)
    if (l.kind == LayerKind::Selective) l.selective.a_log = l.selective.a_log.cwiseMax(1e-6);
}

}  // namespace

TrainResult train_classifier(StackedModel model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  for (int y : data.labels)
    require(y >= 0 && y < model.n_classes(), ErrorKind::InvalidArgument, "label outside readout classes");

  TrainResult res;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(cfg.seed, 0x7a1000 + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      StackedModel grad = zeros_like(model);
      const double scale = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const LossSpec loss = LossSpec::cross_entropy(data.labels[i], cfg.state_decay);
        if (cfg.perturbation) {
          RowMat x = data.continuous_input(model, i);
          x = cfg.perturbation(model, x, loss, step);
          ForwardPass fp = forward_continuous(model, x);
          // Token models: the perturbed embedding is the input, so the table gets no gradient here.
          batch_loss += scale * backward(model, fp, loss, nullptr, data.is_tokens() ? nullptr : &x, scale, &grad, nullptr);
        } else if (data.is_tokens()) {
          ForwardPass fp = forward_embedded(model, embed_tokens(model, data.tokens[i]));
          batch_loss += scale * backward(model, fp, loss, &data.tokens[i], nullptr, scale, &grad, nullptr);
        } else {
          ForwardPass fp = forward_embedded(model, encode_reals(model, data.reals[i]));
          batch_loss += scale * backward(model, fp, loss, nullptr, &data.reals[i], scale, &grad, nullptr);
        }
      }
      for (auto& v : parameter_views(grad)) {
        bool frozen = false;
        for (const auto& f : cfg.frozen) frozen = frozen || block_matches(v.name, f);
        if (frozen) std::fill(v.data, v.data + v.size, 0.0);
        for (Eigen::Index j = 0; j < v.size; ++j)
          require(std::isfinite(v.data[j]), ErrorKind::TrainingDiverged, "gradient became nonfinite in " + v.name);
      }
      require(std::isfinite(batch_loss), ErrorKind::TrainingDiverged, "training loss became nonfinite");
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& v : parameter_views(grad)) sq += Eigen::Map<const Vec>(v.data, v.size).squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm)
          for (auto& v : parameter_views(grad)) Eigen::Map<Vec>(v.data, v.size) *= cfg.clip_norm / norm;
      }
      sgd_step(model, grad, cfg.learning_rate);
      res.loss_curve.push_back(batch_loss);
      epoch_sum += batch_loss * static_cast<double>(end - start);
      ++step;
    }
    res.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
  }
  res.train_accuracy = accuracy(model, data);
  res.model = std::move(model);
  return res;
}

double accuracy(const StackedModel& model, const Dataset& data) {
  data.validate();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int p = data.is_tokens() ? predict(model, data.tokens[i]) : predict(model, data.reals[i]);
    correct += p == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double mean_final_state_norm(const StackedModel& model, const Dataset& data) {
  data.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ForwardPass fp = forward_continuous(model, data.continuous_input(model, i));
    for (const auto& l : fp.layers) acc += l.traj.states.row(l.traj.steps()).norm();
  }
  return acc / static_cast<double>(data.size() * model.layers.size());
}

}  // namespace ssmsec
