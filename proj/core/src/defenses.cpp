#include "ssmsec/defenses.hpp"

#include "ssmsec/grad.hpp"
#include "ssmsec/metrics.hpp"
#include "ssmsec/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace ssmsec {

// ---- M1 ----

std::vector<BandstopSpec> m1_bands(const GainProfile& profile, double half_bandwidth, int order) {
  require(half_bandwidth > 0.0, ErrorKind::InvalidArgument, "half bandwidth must be > 0");
  require(profile.freqs.size() == profile.gains.size(), ErrorKind::Shape, "gain profile is inconsistent");
  std::vector<BandstopSpec> bands;
  const auto& g = profile.gains;
  const auto& w = profile.freqs;
  std::size_t i = 0;
  while (i < g.size()) {
    if (g[i] <= profile.gamma) {
      ++i;
      continue;
    }
    std::size_t j = i, peak = i;
    while (j < g.size() && g[j] > profile.gamma) {
      if (g[j] > g[peak]) peak = j;
      ++j;
    }
    BandstopSpec b;
    b.center = w[peak];
    b.half_bandwidth = std::max({half_bandwidth, w[peak] - w[i], w[j - 1] - w[peak]});
    b.order = order;
    b.threshold = profile.gamma;
    bands.push_back(b);
    i = j;
  }
  return bands;
}

RowMat m1_filter(const RowMat& u, const std::vector<BandstopSpec>& bands) {
  RowMat out = u;
  for (const auto& b : bands) out = bandstop_filter(out, b);
  return out;
}

RowMat m1_filter(const RowMat& u, const GainProfile& profile, double half_bandwidth) {
  return m1_filter(u, m1_bands(profile, half_bandwidth));
}

RowMat m1_project(const RowMat& embedded, const std::vector<BandstopSpec>& bands) {
  const Eigen::Index n = embedded.rows();
  RowMat out = embedded;
  if (n == 0) return out;
  for (Eigen::Index k = 0; 2 * k <= n; ++k) {
    const double w = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    bool hit = false;
    for (const auto& b : bands) hit = hit || (w >= b.center - b.half_bandwidth && w <= b.center + b.half_bandwidth);
    if (!hit) continue;
    Vec c(n), s(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      c(t) = std::cos(w * static_cast<double>(t));
      s(t) = std::sin(w * static_cast<double>(t));
    }
    // Bins 0 and n/2 have no sine part and unit multiplicity.
    const bool edge = k == 0 || 2 * k == n;
    const double scale = edge ? 1.0 / static_cast<double>(n) : 2.0 / static_cast<double>(n);
    const Eigen::RowVectorXd a = scale * (c.transpose() * out);
    out -= c * a;
    if (!edge) {
      const Eigen::RowVectorXd bs = scale * (s.transpose() * out);
      out -= s * bs;
    }
  }
  return out;
}

// ---- M2 ----

std::uint64_t state_hash(const std::vector<Vec>& states) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& v : states)
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits = 0;
      const double x = v(i);
      std::memcpy(&bits, &x, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

SessionStatePool::SessionStatePool(std::vector<Vec> h0, Clock clock, double idle_limit)
    : h0_(std::move(h0)), clock_(std::move(clock)), idle_limit_(idle_limit) {
  require(idle_limit > 0.0, ErrorKind::InvalidArgument, "idle limit must be > 0");
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
  }
}

std::vector<Vec> SessionStatePool::get_or_create(const SessionKey& key) {
  std::lock_guard<std::mutex> lock(mu_);
  const double now = clock_();
  auto [it, created] = entries_.try_emplace(key, Entry{h0_, now});
  if (created) audit_.push_back({now, key.str(), "create", state_hash(h0_)});
  it->second.last_access = now;
  return it->second.states;
}

void SessionStatePool::put(const SessionKey& key, std::vector<Vec> states) {
  require(states.size() == h0_.size(), ErrorKind::Shape, "session state has the wrong number of layers");
  for (std::size_t l = 0; l < states.size(); ++l)
    require(states[l].size() == h0_[l].size(), ErrorKind::Shape, "session state has the wrong width");
  std::lock_guard<std::mutex> lock(mu_);
  Entry& e = entries_[key];
  e.states = std::move(states);
  e.last_access = clock_();
}

void SessionStatePool::reset_locked(const SessionKey& key, Entry& e, const char* event) {
  audit_.push_back({clock_(), key.str(), event, state_hash(e.states)});
  e.states = h0_;
}

void SessionStatePool::reset(const SessionKey& key) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    it = entries_.emplace(key, Entry{h0_, clock_()}).first;
  }
  reset_locked(key, it->second, "reset");
  it->second.last_access = clock_();
}

int SessionStatePool::sweep() {
  std::lock_guard<std::mutex> lock(mu_);
  const double now = clock_();
  int n = 0;
  for (auto& [key, e] : entries_) {
    if (now - e.last_access >= idle_limit_) {
      reset_locked(key, e, "timeout");
      e.last_access = now;
      ++n;
    }
  }
  return n;
}

bool SessionStatePool::contains(const SessionKey& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.count(key) > 0;
}

std::size_t SessionStatePool::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::vector<AuditRecord> SessionStatePool::audit() const {
  std::lock_guard<std::mutex> lock(mu_);
  return audit_;
}

std::string SessionStatePool::audit_jsonl() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::ostringstream os;
  for (const auto& r : audit_) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(r.hash));
    os << nlohmann::json{{"ts", r.ts}, {"key", r.key}, {"event", r.event}, {"hash", hex}}.dump() << '\n';
  }
  return os.str();
}

Vec m2_serve(SessionStatePool& pool, const SessionKey& key, const StackedModel& model, const RowMat& embedded) {
  const ForwardPass fp = forward_embedded(model, embedded, pool.get_or_create(key));
  std::vector<Vec> next;
  next.reserve(fp.layers.size());
  for (const auto& l : fp.layers) next.push_back(l.traj.states.row(l.traj.steps()).transpose());
  pool.put(key, std::move(next));
  return fp.logits;
}

// ---- Monitors ----

const char* to_string(AlertKind k) {
  return k == AlertKind::TrajectorySpike ? "trajectory-spike" : "entropy-exceeded";
}

namespace {

// Bias-corrected exponential moving mean and variance.
class EmaStat {
 public:
  explicit EmaStat(double alpha) : alpha_(alpha) {}
  double z(double x) const {
    const double c = 1.0 - std::pow(alpha_, n_);
    const double mu = m_ / c;
    const double sd = std::sqrt(std::max(v_ / c, 0.0));
    return (x - mu) / std::max(sd, 1e-8);
  }
  void update(double x) {
    const double mu_prev = n_ > 0 ? m_ / (1.0 - std::pow(alpha_, n_)) : x;
    m_ = alpha_ * m_ + (1.0 - alpha_) * x;
    v_ = alpha_ * v_ + (1.0 - alpha_) * (x - mu_prev) * (x - mu_prev);
    ++n_;
  }

 private:
  double alpha_;
  double m_ = 0.0, v_ = 0.0;
  int n_ = 0;
};

}  // namespace

std::vector<MonitorAlert> m3_monitor(const RowMat& states, const RowMat& inputs, const M3Options& opt) {
  require(opt.alpha > 0.0 && opt.alpha < 1.0, ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  require(opt.warmup >= 1, ErrorKind::InvalidArgument, "warm-up must be >= 1");
  const Eigen::Index steps = states.rows() - 1;
  require(inputs.rows() == steps, ErrorKind::Shape, "inputs must have one row per state transition");
  EmaStat state_stat(opt.alpha), input_stat(opt.alpha);
  std::vector<MonitorAlert> alerts;
  for (Eigen::Index t = 1; t <= steps; ++t) {
    const double d = (states.row(t) - states.row(t - 1)).norm();
    const double c = t >= 2 ? std::abs(inputs.row(t - 1).norm() - inputs.row(t - 2).norm()) : 0.0;
    if (t > opt.warmup) {
      const double z = state_stat.z(d);
      const double zi = input_stat.z(c);
      if (z > opt.z_threshold && zi < opt.input_z_threshold)
        alerts.push_back({static_cast<int>(t), AlertKind::TrajectorySpike, z, opt.z_threshold, zi});
    }
    state_stat.update(d);
    input_stat.update(c);
  }
  return alerts;
}

std::vector<MonitorAlert> m4_monitor(const RowMat& states, int window, double h_max) {
  require(window >= 2, ErrorKind::InvalidArgument, "window must be >= 2");
  std::vector<MonitorAlert> alerts;
  const Eigen::Index steps = states.rows() - 1;
  for (Eigen::Index t = window; t <= steps; ++t) {
    const double h = state_entropy(states.middleRows(t - window + 1, window));
    if (h > h_max) alerts.push_back({static_cast<int>(t), AlertKind::EntropyExceeded, h, h_max, 0.0});
  }
  return alerts;
}

std::string alerts_to_csv(const std::vector<MonitorAlert>& alerts) {
  std::ostringstream os;
  os.precision(10);
  os << "t,kind,score,threshold\n";
  for (const auto& a : alerts) os << a.t << ',' << to_string(a.kind) << ',' << a.score << ',' << a.threshold << '\n';
  return os.str();
}

// ---- M5 ----

double m5_sigma(double eps_dp, double delta_dp, double sensitivity) {
  require(eps_dp > 0.0, ErrorKind::InvalidArgument, "eps_dp must be > 0");
  require(delta_dp > 0.0 && delta_dp < 1.0, ErrorKind::InvalidArgument, "delta_dp must lie in (0, 1)");
  require(sensitivity > 0.0, ErrorKind::InvalidArgument, "sensitivity must be > 0");
  if (std::isinf(eps_dp)) return 0.0;
  return sensitivity * std::sqrt(2.0 * std::log(1.25 / delta_dp)) / eps_dp;
}

std::string NoiseAudit::json() const {
  return nlohmann::json{{"eps_dp", eps_dp}, {"delta_dp", delta_dp}, {"sensitivity", sensitivity}, {"sigma", sigma},
                        {"seed", seed}}
      .dump();
}

RowMat m5_gaussian(const RowMat& u, double eps_dp, double delta_dp, double sensitivity, std::uint64_t seed,
                   std::vector<NoiseAudit>* audit) {
  const double sigma = m5_sigma(eps_dp, delta_dp, sensitivity);
  for (Eigen::Index t = 0; t < u.rows(); ++t)
    require(u.row(t).norm() <= sensitivity * (1.0 + 1e-12), ErrorKind::SensitivityViolation,
            "input row " + std::to_string(t) + " exceeds the sensitivity bound; normalize embeddings first");
  RowMat out = u;
  if (sigma > 0.0) {
    Rng rng(seed, 0xd9);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * rng.normal();
  }
  if (audit) audit->push_back({eps_dp, delta_dp, sensitivity, sigma, seed});
  return out;
}

RowMat normalize_rows(const RowMat& u, double bound) {
  require(bound > 0.0, ErrorKind::InvalidArgument, "bound must be > 0");
  RowMat out = u;
  for (Eigen::Index t = 0; t < out.rows(); ++t) {
    const double n = out.row(t).norm();
    if (n > bound) out.row(t) *= bound / n;
  }
  return out;
}

// ---- M6 ----

namespace {

// Orthonormal DCT-II basis vector k of length n.
Vec dct_basis(Eigen::Index n, Eigen::Index k) {
  Vec v(n);
  const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  for (Eigen::Index t = 0; t < n; ++t)
    v(t) = s * std::cos(M_PI * static_cast<double>(k) * (2.0 * static_cast<double>(t) + 1.0) / (2.0 * static_cast<double>(n)));
  return v;
}

}  // namespace

RowMat band_project(const RowMat& delta, double lo, double hi) {
  const Eigen::Index n = delta.rows();
  RowMat out = RowMat::Zero(n, delta.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double w = M_PI * static_cast<double>(k) / static_cast<double>(n);
    if (w < lo || w > hi) continue;
    const Vec phi = dct_basis(n, k);
    out += phi * (phi.transpose() * delta);
  }
  return out;
}

double band_energy_fraction(const RowMat& delta, double lo, double hi) {
  const double total = delta.squaredNorm();
  if (total == 0.0) return 1.0;
  return band_project(delta, lo, hi).squaredNorm() / total;
}

double first_layer_peak(const StackedModel& model, const RowMat& x) {
  require(!model.layers.empty(), ErrorKind::InvalidArgument, "model has no layers");
  const ModelLayer& l = model.layers.front();
  if (l.kind == LayerKind::Lti) return gain_profile(l.lti.discretize()).omega_star;
  return linearized_gain(l.selective, x).omega_star;
}

SpectralTrainResult m6_spectral_training(const StackedModel& model, const Dataset& data,
                                         const SpectralTrainConfig& cfg) {
  require(cfg.epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
  require(cfg.half_bandwidth > 0.0, ErrorKind::InvalidArgument, "half bandwidth must be > 0");
  require(cfg.refresh_every >= 1 && cfg.inner_steps >= 1, ErrorKind::InvalidArgument,
          "refresh interval and inner steps must be >= 1");
  SpectralTrainResult out;
  if (cfg.epsilon == 0.0) {
    out.result = train_classifier(model, data, cfg.train);
    return out;
  }
  TrainConfig tc = cfg.train;
  double omega = 0.0;
  std::size_t refreshed_at = std::numeric_limits<std::size_t>::max();
  tc.perturbation = [&](const StackedModel& m, const RowMat& x, const LossSpec& loss, std::size_t step) -> RowMat {
    if (step % static_cast<std::size_t>(cfg.refresh_every) == 0 && refreshed_at != step) {
      omega = first_layer_peak(m, x);
      out.peaks.push_back(omega);
      refreshed_at = step;
    }
    const double lo = std::max(0.0, omega - cfg.half_bandwidth);
    const double hi = std::min(M_PI, omega + cfg.half_bandwidth);
    RowMat delta = RowMat::Zero(x.rows(), x.cols());
    const double eta = 2.5 * cfg.epsilon / cfg.inner_steps;
    for (int i = 0; i < cfg.inner_steps; ++i) {
      const RowMat g = band_project(grad_continuous(m, x + delta, loss).grad, lo, hi);
      const double gn = g.norm();
      if (gn == 0.0) break;
      delta = band_project(delta + (eta / gn) * g, lo, hi);
      const double dn = delta.norm();
      if (dn > cfg.epsilon) delta *= cfg.epsilon / dn;
    }
    out.max_delta_norm = std::max(out.max_delta_norm, delta.norm());
    if (delta.norm() > 0.0) out.min_band_fraction = std::min(out.min_band_fraction, band_energy_fraction(delta, lo, hi));
    return x + delta;
  };
  out.result = train_classifier(model, data, tc);
  return out;
}

}  // namespace ssmsec
