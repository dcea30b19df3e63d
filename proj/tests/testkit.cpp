#include "testkit.hpp"

#include "ssmsec/grad.hpp"
#include "ssmsec/spectral.hpp"
#include "ssmsec/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ssmsec::testkit {

DiscreteSsm random_stable_system(Rng& rng, int n, int d, bool pairs, double max_radius) {
  std::vector<Mode> modes;
  int width = 0;
  while (width < n) {
    if (pairs && n - width >= 2 && rng.uniform() < 0.5) {
      const double r = rng.uniform(0.1, max_radius);
      const double th = rng.uniform(0.05, std::numbers::pi - 0.05);
      modes.push_back({std::polar(r, th), true});
      width += 2;
    } else {
      modes.push_back({cdouble(rng.uniform(-max_radius, max_radius), 0.0), false});
      width += 1;
    }
  }
  Mat b(n, d), c(d, n), dd(d, d);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < dd.size(); ++i) dd.data()[i] = rng.normal();
  return DiscreteSsm(modes, b, c, dd);
}

RowMat random_sequence(Rng& rng, int steps, int d, double scale) {
  RowMat u(steps, d);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = scale * rng.normal();
  return u;
}

StackedModel random_small_model(Rng& rng, bool tokens) {
  ModelSpec s;
  s.d_model = 2 + static_cast<int>(rng.uniform_int(6));
  s.n_state = 2 + static_cast<int>(rng.uniform_int(6));
  s.n_layers = 1 + static_cast<int>(rng.uniform_int(3));
  for (int l = 0; l < s.n_layers; ++l) s.kinds.push_back(rng.uniform() < 0.5 ? LayerKind::Lti : LayerKind::Selective);
  if (tokens) {
    s.alphabet_size = 4;
  } else {
    s.d_in = 1 + static_cast<int>(rng.uniform_int(2));
  }
  s.residual = rng.uniform() < 0.5;
  s.activation = rng.uniform() < 0.5 ? Activation::Gelu : Activation::Identity;
  s.pooling = rng.uniform() < 0.5 ? Pooling::Last : Pooling::Mean;
  s.dt_min = 0.05;
  s.dt_max = 0.5;
  s.sel_a_min = 0.2;
  s.sel_a_max = 1.0;
  return init_model(s, rng.next_u64());
}

DualityResult scan_conv_duality(int systems, std::uint64_t seed) {
  DualityResult out;
  for (int k = 0; k < systems; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 0x71);
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const int d = 1 + static_cast<int>(rng.uniform_int(3));
    const int steps = 1 + static_cast<int>(rng.uniform_int(256));
    const DiscreteSsm sys = random_stable_system(rng, n, d, true);
    const RowMat u = random_sequence(rng, steps, d);
    const RowMat y_scan = lti_scan(sys, u).y;
    const RowMat y_conv = conv_apply(conv_kernel(sys, steps), sys.d(), u);
    out.max_abs_error = std::max(out.max_abs_error, (y_scan - y_conv).cwiseAbs().maxCoeff());
    ++out.systems;
  }
  return out;
}

SpectralSuite spectral_suite(int pairs, int tightness_systems, int probe_systems, std::uint64_t seed) {
  SpectralSuite out;
  for (int k = 0; k < pairs; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 0x75);
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const int d = 1 + static_cast<int>(rng.uniform_int(3));
    const DiscreteSsm sys = random_stable_system(rng, n, d, true);
    const int steps = 16 + static_cast<int>(rng.uniform_int(240));
    // Mix of white noise, sinusoids and sparse spikes.
    RowMat du = random_sequence(rng, steps, d);
    if (k % 3 == 1) du = spectral_perturbation(rng.uniform(0.0, std::numbers::pi), 1.0, steps, d, rng.uniform(0.0, 6.0));
    if (k % 3 == 2) du = du.unaryExpr([&](double v) { return rng.uniform() < 0.05 ? v : 0.0; });
    const BoundCheck b = verify_spectral_bound(sys, du);
    out.violations += b.lhs <= b.rhs * (1.0 + 1e-9) ? 0 : 1;
    out.worst_ratio = std::max(out.worst_ratio, b.rhs > 0 ? b.lhs / b.rhs : 0.0);
    ++out.pairs;
  }
  for (int k = 0; k < tightness_systems; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 0x76);
    const DiscreteSsm sys = random_stable_system(rng, 1 + static_cast<int>(rng.uniform_int(8)), 1, true, 0.9);
    const GainProfile p = gain_profile(sys);
    const BoundCheck b = verify_spectral_bound(sys, spectral_perturbation(p.omega_star, 1.0, 4096, 1), p.hinf);
    out.min_tightness = std::min(out.min_tightness, b.tight_ratio);
  }
  for (int k = 0; k < probe_systems; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 0x77);
    const DiscreteSsm sys = random_stable_system(rng, 1 + static_cast<int>(rng.uniform_int(8)), 1, true, 0.9);
    const std::vector<double> freqs{0.0, 0.3, 0.9, 1.7, 2.5, 3.0};
    const GainProfile probe =
        spectral_probe([&](const RowMat& u) { return lti_scan(sys, u).y; }, freqs, 1.0, 2048);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const double truth = spectral_norm(transfer_gain(sys, freqs[i]));
      out.max_probe_error = std::max(out.max_probe_error, std::abs(probe.gains[i] - truth) / truth);
    }
  }
  return out;
}

namespace {

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

}  // namespace

GradientSuite gradient_suite(int cases, std::uint64_t seed) {
  GradientSuite out;
  const double h = 1e-5;
  for (int k = 0; k < cases; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)), 0x67);
    const bool tokens = k % 2 == 0;
    StackedModel model = random_small_model(rng, tokens);
    const int steps = 4 + static_cast<int>(rng.uniform_int(9));
    Example ex;
    if (tokens) {
      for (int t = 0; t < steps; ++t) ex.tokens.push_back(static_cast<int>(rng.uniform_int(4)));
    } else {
      ex.reals = random_sequence(rng, steps, model.d_in);
    }
    switch (k % 3) {
      case 0: ex.loss = LossSpec::cross_entropy(static_cast<int>(rng.uniform_int(2))); break;
      case 1: ex.loss = LossSpec::cross_entropy(static_cast<int>(rng.uniform_int(2)), 0.5); break;
      default: {
        Vec w(model.n_classes());
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
        ex.loss = LossSpec::linear(w);
        if (model.has_selective()) ex.loss.gate_weight = 0.3;
      }
    }
    auto loss_of = [&](const StackedModel& m) {
      const ForwardPass fp = tokens ? forward_embedded(m, embed_tokens(m, ex.tokens))
                                    : forward_embedded(m, encode_reals(m, ex.reals));
      return evaluate_loss(fp, ex.loss).total;
    };

    ModelGradient g = grad_params(model, {ex});
    auto gv = parameter_views(g.grad);
    auto pv = parameter_views(model);
    Eigen::Index total = 0;
    for (const auto& v : pv) total += v.size;
    Vec analytic(total), numeric(total);
    Eigen::Index at = 0;
    for (std::size_t b = 0; b < pv.size(); ++b)
      for (Eigen::Index i = 0; i < pv[b].size; ++i, ++at) {
        analytic(at) = gv[b].data[i];
        const double keep = pv[b].data[i];
        pv[b].data[i] = keep + h;
        const double up = loss_of(model);
        pv[b].data[i] = keep - h;
        const double down = loss_of(model);
        pv[b].data[i] = keep;
        numeric(at) = (up - down) / (2 * h);
      }
    out.worst_param_error = std::max(out.worst_param_error, relative_error(analytic, numeric));
    out.max_params = std::max(out.max_params, static_cast<int>(total));

    const RowMat x = tokens ? embed_tokens(model, ex.tokens) : ex.reals;
    const InputGradient ig = grad_continuous(model, x, ex.loss);
    RowMat xp = x;
    Vec a_in(x.size()), n_in(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      a_in(i) = ig.grad.data()[i];
      const double keep = xp.data()[i];
      xp.data()[i] = keep + h;
      const double up = evaluate_loss(forward_continuous(model, xp), ex.loss).total;
      xp.data()[i] = keep - h;
      const double down = evaluate_loss(forward_continuous(model, xp), ex.loss).total;
      xp.data()[i] = keep;
      n_in(i) = (up - down) / (2 * h);
    }
    out.worst_input_error = std::max(out.worst_input_error, relative_error(a_in, n_in));
    ++out.cases;
  }
  return out;
}

StatsSuite stats_suite(std::uint64_t seed, int null_trials) {
  StatsSuite out;
  Rng rng(seed, 0x57);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t hits = 0;
    for (int i = 0; i < 100; ++i) hits += rng.uniform() < 0.3 ? 1 : 0;
    const CiResult ci = wilson_ci(hits, 100);
    out.wilson_covered += ci.lower <= 0.3 && 0.3 <= ci.upper ? 1 : 0;
  }
  int below5 = 0, below10 = 0;
  for (int trial = 0; trial < null_trials; ++trial) {
    std::vector<double> a(20), b(20);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double p = permutation_test(a, b, 2000, derive_seed(seed, static_cast<std::uint64_t>(trial)));
    below5 += p <= 0.05 ? 1 : 0;
    below10 += p <= 0.10 ? 1 : 0;
  }
  out.null_p_frac_below_005 = static_cast<double>(below5) / null_trials;
  out.null_p_frac_below_010 = static_cast<double>(below10) / null_trials;
  const std::vector<bool> rej = holm_bonferroni({0.01, 0.04}, 0.05);
  out.holm_example = rej.size() == 2 && rej[0] && rej[1];
  return out;
}

}  // namespace ssmsec::testkit
