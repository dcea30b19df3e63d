#include "ssmsec/model.hpp"

#include "ssmsec/rng.hpp"

#include <cmath>

namespace ssmsec {

const char* to_string(LayerKind k) { return k == LayerKind::Lti ? "lti" : "selective"; }
const char* to_string(Activation a) { return a == Activation::Gelu ? "gelu" : "identity"; }
const char* to_string(Pooling p) { return p == Pooling::Last ? "last" : "mean"; }

ContinuousSsm LtiLayer::continuous() const {
  Vec a = -log_neg_a.array().exp();
  return ContinuousSsm::real_diagonal(a, b, c, d);
}

DiscreteSsm LtiLayer::discretize() const { return zoh_discretize(continuous(), std::exp(log_step)); }

int ModelLayer::state_width() const {
  return kind == LayerKind::Lti ? lti.n_state() : selective.state_width();
}

bool StackedModel::has_selective() const {
  for (const auto& l : layers)
    if (l.kind == LayerKind::Selective) return true;
  return false;
}

void StackedModel::validate() const {
  require(d_model >= 1, ErrorKind::InvalidDimension, "d_model must be positive");
  require(!layers.empty(), ErrorKind::InvalidDimension, "model needs at least one layer");
  if (token_input()) {
    require(embedding.rows() == alphabet_size && embedding.cols() == d_model, ErrorKind::Shape,
            "embedding must be V x d_model");
  } else {
    require(d_in >= 1, ErrorKind::InvalidDimension, "d_in must be positive");
    require(encoder.rows() == d_model && encoder.cols() == d_in, ErrorKind::Shape, "encoder must be d_model x d_in");
    require(encoder_bias.size() == d_model, ErrorKind::Shape, "encoder bias must have d_model entries");
  }
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Lti) {
      const int n = l.lti.n_state();
      require(l.lti.b.rows() == n && l.lti.b.cols() == d_model, ErrorKind::Shape, "layer b must be N x d_model");
      require(l.lti.c.rows() == d_model && l.lti.c.cols() == n, ErrorKind::Shape, "layer c must be d_model x N");
      require(l.lti.d.rows() == d_model && l.lti.d.cols() == d_model, ErrorKind::Shape, "layer d must be square");
    } else {
      l.selective.validate();
      require(l.selective.channels() == d_model, ErrorKind::Shape, "selective layer width must equal d_model");
    }
  }
  require(readout.cols() == d_model && readout.rows() >= 1, ErrorKind::Shape, "readout must be K x d_model");
  require(readout_bias.size() == readout.rows(), ErrorKind::Shape, "readout bias must have K entries");
}

namespace {

Mat normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

StackedModel init_model(const ModelSpec& spec, std::uint64_t seed) {
  require(spec.d_model >= 1 && spec.n_state >= 1 && spec.n_layers >= 1, ErrorKind::InvalidDimension,
          "model sizes must be positive");
  require(spec.kinds.empty() || static_cast<int>(spec.kinds.size()) == spec.n_layers, ErrorKind::Config,
          "layer kind list must match layer count");
  Rng rng(seed, 0x40de1);
  const int dm = spec.d_model;
  const int n = spec.n_state;
  StackedModel m;
  m.d_model = dm;
  m.seed = seed;
  m.residual = spec.residual;
  m.activation = spec.activation;
  m.pooling = spec.pooling;
  if (spec.alphabet_size > 0) {
    m.alphabet_size = spec.alphabet_size;
    Vec offset(dm);
    for (int j = 0; j < dm; ++j) offset(j) = rng.normal();
    m.embedding = normal_matrix(rng, spec.alphabet_size, dm, spec.embed_scale);
    m.embedding.rowwise() += spec.embed_offset * offset.transpose();
  } else {
    require(spec.d_in >= 1, ErrorKind::InvalidDimension, "d_in must be positive");
    m.d_in = spec.d_in;
    m.encoder = normal_matrix(rng, dm, spec.d_in, 1.0);
    m.encoder_bias = Vec::Zero(dm);
  }
  const Vec hippo = hippo_legs_diagonal(n);
  for (int l = 0; l < spec.n_layers; ++l) {
    ModelLayer layer;
    layer.kind = spec.kinds.empty() ? spec.kind : spec.kinds[static_cast<std::size_t>(l)];
    if (layer.kind == LayerKind::Lti) {
      LtiLayer& p = layer.lti;
      p.log_neg_a = (-hippo * spec.decay_scale).array().log();
      p.log_step = std::log(log_uniform(rng, spec.dt_min, spec.dt_max));
      p.b = normal_matrix(rng, n, dm, spec.b_scale / std::sqrt(static_cast<double>(dm)));
      if (spec.b_rate_power != 0.0) {
        const Vec w = p.log_neg_a.array().exp().pow(spec.b_rate_power);
        p.b = (w / std::sqrt(w.squaredNorm() / n)).asDiagonal() * p.b;
      }
      p.c = normal_matrix(rng, dm, n, spec.c_scale / std::sqrt(static_cast<double>(n)));
      p.d = spec.feedthrough ? normal_matrix(rng, dm, dm, 1.0 / std::sqrt(static_cast<double>(dm))) : Mat::Zero(dm, dm);
    } else {
      SelectiveSsm& s = layer.selective;
      s.a_log.resize(n);
      for (int k = 0; k < n; ++k) s.a_log(k) = log_uniform(rng, spec.sel_a_min, spec.sel_a_max);
      s.w_delta = normal_matrix(rng, n, dm, spec.sel_w_delta_scale / std::sqrt(static_cast<double>(dm)));
      s.b_delta = Vec::Zero(n);
      s.w_b = normal_matrix(rng, n, dm, spec.b_scale / std::sqrt(static_cast<double>(dm)));
      s.c = normal_matrix(rng, dm, n, spec.c_scale / std::sqrt(static_cast<double>(n)));
      s.d = spec.feedthrough ? Vec::Ones(dm) : Vec::Zero(dm);
    }
    m.layers.push_back(std::move(layer));
  }
  m.readout = normal_matrix(rng, spec.n_classes, dm, spec.readout_scale / std::sqrt(static_cast<double>(dm)));
  m.readout_bias = Vec::Zero(spec.n_classes);
  m.validate();
  return m;
}

std::vector<int> encode_tokens(const std::string& text, const std::string& alphabet) {
  std::vector<int> out;
  out.reserve(text.size());
  for (char ch : text) {
    const auto pos = alphabet.find(ch);
    require(pos != std::string::npos, ErrorKind::Encoding, std::string("symbol '") + ch + "' not in alphabet");
    out.push_back(static_cast<int>(pos));
  }
  return out;
}

std::string decode_tokens(const std::vector<int>& tokens, const std::string& alphabet) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    require(t >= 0 && t < static_cast<int>(alphabet.size()), ErrorKind::Encoding, "token outside alphabet");
    out.push_back(alphabet[static_cast<std::size_t>(t)]);
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

std::vector<StateTrajectory> ForwardPass::trajectories() const {
  std::vector<StateTrajectory> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.traj);
  return out;
}

double ForwardPass::gate_sum() const {
  double s = 0.0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::Selective) s += l.delta.sum();
  return s;
}

RowMat embed_tokens(const StackedModel& model, const std::vector<int>& tokens) {
  require(model.token_input(), ErrorKind::Encoding, "model expects real-valued input");
  require(!tokens.empty(), ErrorKind::InvalidArgument, "input must have at least one step");
  RowMat x(static_cast<Eigen::Index>(tokens.size()), model.d_model);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int tok = tokens[t];
    require(tok >= 0 && tok < model.alphabet_size, ErrorKind::Encoding, "token outside alphabet");
    x.row(static_cast<Eigen::Index>(t)) = model.embedding.row(tok);
  }
  return x;
}

RowMat encode_reals(const StackedModel& model, const RowMat& u) {
  require(!model.token_input(), ErrorKind::Encoding, "model expects token input");
  require(u.rows() >= 1, ErrorKind::InvalidArgument, "input must have at least one step");
  require(u.cols() == model.d_in, ErrorKind::Shape, "input width does not match encoder");
  require(u.allFinite(), ErrorKind::InvalidArgument, "input is not finite");
  RowMat x = u * model.encoder.transpose();
  x.rowwise() += model.encoder_bias.transpose();
  return x;
}

ForwardPass forward_embedded(const StackedModel& model, const RowMat& x0) { return forward_embedded(model, x0, {}); }

ForwardPass forward_embedded(const StackedModel& model, const RowMat& x0, const std::vector<Vec>& h0) {
  require(x0.rows() >= 1, ErrorKind::InvalidArgument, "input must have at least one step");
  require(x0.cols() == model.d_model, ErrorKind::Shape, "embedded input width mismatch");
  require(h0.empty() || h0.size() == model.layers.size(), ErrorKind::Shape, "one initial state per layer expected");
  ForwardPass fp;
  fp.x0 = x0;
  fp.layers.reserve(model.layers.size());
  RowMat x = x0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const ModelLayer& layer = model.layers[li];
    LayerCache cache;
    cache.kind = layer.kind;
    cache.x_in = x;
    if (layer.kind == LayerKind::Lti) {
      DiscreteSsm sys = layer.lti.discretize();
      ScanResult r = h0.empty() ? lti_scan(sys, x) : lti_scan(sys, x, h0[li]);
      cache.y = std::move(r.y);
      cache.traj = std::move(r.traj);
      cache.lti.emplace(std::move(sys));
    } else {
      SelectiveScanResult r = h0.empty() ? selective_scan(layer.selective, x) : selective_scan(layer.selective, x, h0[li]);
      cache.y = std::move(r.y);
      cache.traj = std::move(r.traj);
      cache.pre = x * layer.selective.w_delta.transpose();
      cache.pre.rowwise() += layer.selective.b_delta.transpose();
      cache.delta = std::move(r.delta);
      cache.a_bar = std::move(r.a_bar);
      cache.b_bar = std::move(r.b_bar);
    }
    cache.traj.layer_index = static_cast<int>(li);
    RowMat act = cache.y;
    if (model.activation == Activation::Gelu) act = act.unaryExpr([](double v) { return gelu(v); });
    x = model.residual ? RowMat(x + act) : act;
    fp.layers.push_back(std::move(cache));
  }
  fp.x_out = x;
  if (model.pooling == Pooling::Last) {
    fp.pooled = x.row(x.rows() - 1).transpose();
  } else {
    fp.pooled = x.colwise().mean().transpose();
  }
  fp.logits = model.readout * fp.pooled + model.readout_bias;
  return fp;
}

ModelOutput forward_model(const StackedModel& model, const std::vector<int>& tokens) {
  ForwardPass fp = forward_embedded(model, embed_tokens(model, tokens));
  return ModelOutput{fp.logits, fp.trajectories()};
}

ModelOutput forward_model(const StackedModel& model, const RowMat& reals) {
  ForwardPass fp = forward_embedded(model, encode_reals(model, reals));
  return ModelOutput{fp.logits, fp.trajectories()};
}

namespace {
int argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}
}  // namespace

int predict(const StackedModel& model, const std::vector<int>& tokens) {
  return argmax(forward_embedded(model, embed_tokens(model, tokens)).logits);
}

int predict(const StackedModel& model, const RowMat& reals) {
  return argmax(forward_embedded(model, encode_reals(model, reals)).logits);
}

}  // namespace ssmsec
