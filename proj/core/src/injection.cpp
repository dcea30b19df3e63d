#include "ssmsec/attacks.hpp"
#include "ssmsec/metrics.hpp"
#include "ssmsec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmsec {

std::vector<int> apply_edits(const std::vector<int>& tokens, const std::vector<TokenEdit>& edits) {
  std::vector<int> out = tokens;
  for (const auto& e : edits) {
    require(e.position >= 0 && e.position < static_cast<int>(tokens.size()), ErrorKind::InvalidArgument,
            "edit position out of range");
    out[static_cast<std::size_t>(e.position)] = e.token;
  }
  return out;
}

FirstLayerScorer::FirstLayerScorer(const StackedModel& model, const std::vector<int>& tokens, double tau_fraction)
    : model_(model), tokens_(tokens), current_(tokens) {
  require(model.token_input(), ErrorKind::Encoding, "token injection needs a token model");
  require(!tokens.empty(), ErrorKind::InvalidArgument, "sequence must be non-empty");
  clean_ = rescan(tokens);
  dev_ = RowMat::Zero(clean_.rows(), clean_.cols());
  tau_ = tau_from_trajectory(StateTrajectory{clean_, 0, {}}, tau_fraction);
  const ModelLayer& first = model.layers.front();
  if (first.kind == LayerKind::Lti) {
    const DiscreteSsm sys = first.lti.discretize();
    if (!sys.has_pairs()) {
      fast_ = true;
      a_bar_ = sys.a_real();
      drive_ = model.embedding * sys.b_bar().transpose();
      const Eigen::Index rows = clean_.rows();
      powers_.resize(rows, a_bar_.size());
      powers_.row(0).setOnes();
      for (Eigen::Index k = 1; k < rows; ++k) powers_.row(k) = powers_.row(k - 1).cwiseProduct(a_bar_.transpose());
    }
  }
}

RowMat FirstLayerScorer::rescan(const std::vector<int>& tokens) const {
  const RowMat x = embed_tokens(model_, tokens);
  const ModelLayer& first = model_.layers.front();
  if (first.kind == LayerKind::Lti) return lti_scan(first.lti.discretize(), x).traj.states;
  return selective_scan(first.selective, x).traj.states;
}

int FirstLayerScorer::corrupted() const {
  int n = 0;
  for (Eigen::Index t = 0; t < dev_.rows(); ++t) n += dev_.row(t).norm() > tau_;
  return n;
}

double FirstLayerScorer::stiv_of(const std::vector<TokenEdit>& edits) const {
  const RowMat adv = rescan(apply_edits(tokens_, edits));
  int n = 0;
  for (Eigen::Index t = 0; t < adv.rows(); ++t) n += (adv.row(t) - clean_.row(t)).norm() > tau_;
  return static_cast<double>(n) / static_cast<double>(adv.rows());
}

namespace {

bool better(int count, double soft, const FirstLayerScorer::Candidate& best) {
  return count > best.count || (count == best.count && soft > best.soft);
}

}  // namespace

FirstLayerScorer::Candidate FirstLayerScorer::best(const std::vector<bool>& allowed) const {
  const int steps = this->steps();
  const int vocab = model_.alphabet_size;
  const Eigen::Index rows = dev_.rows();
  // Norms of the committed deviation and their prefix sums over [0, t].
  Vec dev_sq = dev_.rowwise().squaredNorm();
  std::vector<int> count_prefix(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<double> soft_prefix(static_cast<std::size_t>(rows) + 1, 0.0);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double nrm = std::sqrt(dev_sq(t));
    count_prefix[static_cast<std::size_t>(t) + 1] = count_prefix[static_cast<std::size_t>(t)] + (nrm > tau_);
    soft_prefix[static_cast<std::size_t>(t) + 1] = soft_prefix[static_cast<std::size_t>(t)] + std::min(nrm / tau_, 1.0);
  }
  Candidate out;
  const double tau_sq = tau_ * tau_;
  for (int p = 0; p < steps; ++p) {
    if (!allowed[static_cast<std::size_t>(p)]) continue;
    const int cur = current_[static_cast<std::size_t>(p)];
    // Token at position p drives state row p + 1.
    const int first_row = p + 1;
    const Eigen::Index r = rows - first_row;
    const int head_count = count_prefix[static_cast<std::size_t>(first_row)];
    const double head_soft = soft_prefix[static_cast<std::size_t>(first_row)];
    if (fast_) {
      const Eigen::Index n = a_bar_.size();
      RowMat v(vocab - 1, n);
      std::vector<int> toks;
      for (int j = 0; j < vocab; ++j) {
        if (j == cur) continue;
        v.row(static_cast<Eigen::Index>(toks.size())) = drive_.row(j) - drive_.row(cur);
        toks.push_back(j);
      }
      const RowMat m = dev_.bottomRows(r).cwiseProduct(powers_.topRows(r));
      const RowMat cross = m * v.transpose();
      const RowMat p2 = powers_.topRows(r).cwiseProduct(powers_.topRows(r));
      const RowMat quad = p2 * v.cwiseProduct(v).transpose();
      for (std::size_t c = 0; c < toks.size(); ++c) {
        int count = head_count;
        double soft = head_soft;
        const Eigen::Index ci = static_cast<Eigen::Index>(c);
        for (Eigen::Index k = 0; k < r; ++k) {
          const double sq = std::max(0.0, dev_sq(first_row + k) + 2.0 * cross(k, ci) + quad(k, ci));
          count += sq > tau_sq;
          soft += std::min(std::sqrt(sq) / tau_, 1.0);
        }
        if (better(count, soft, out)) out = Candidate{p, toks[c], count, soft};
      }
    } else {
      for (int j = 0; j < vocab; ++j) {
        if (j == cur) continue;
        std::vector<int> cand = current_;
        cand[static_cast<std::size_t>(p)] = j;
        const RowMat adv = rescan(cand);
        int count = 0;
        double soft = 0.0;
        for (Eigen::Index t = 0; t < rows; ++t) {
          const double nrm = (adv.row(t) - clean_.row(t)).norm();
          count += nrm > tau_;
          soft += std::min(nrm / tau_, 1.0);
        }
        if (better(count, soft, out)) out = Candidate{p, j, count, soft};
      }
    }
  }
  return out;
}

void FirstLayerScorer::commit(const TokenEdit& edit) {
  const int p = edit.position;
  const int cur = current_[static_cast<std::size_t>(p)];
  current_[static_cast<std::size_t>(p)] = edit.token;
  if (fast_) {
    const Eigen::Index r = dev_.rows() - (p + 1);
    const Eigen::RowVectorXd v = drive_.row(edit.token) - drive_.row(cur);
    dev_.bottomRows(r).array() += powers_.topRows(r).array().rowwise() * v.array();
  } else {
    dev_ = rescan(current_) - clean_;
  }
}

std::vector<TokenEdit> greedy_edits(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                    const InjectionOptions& opt) {
  const int steps = static_cast<int>(tokens.size());
  require(budget >= 0 && budget <= steps, ErrorKind::InvalidArgument, "budget must lie in [0, T]");
  const bool stealth = opt.similarity_floor > 0.0;
  if (stealth) {
    require(2 * budget - 1 <= steps, ErrorKind::InfeasibleStealth, "no non-adjacent placement of that many edits");
    require(1.0 - static_cast<double>(budget) / steps >= opt.similarity_floor, ErrorKind::InfeasibleStealth,
            "budget breaks the similarity floor");
  }
  std::vector<TokenEdit> edits;
  if (budget == 0) return edits;
  FirstLayerScorer scorer(model, tokens, opt.tau_fraction);
  std::vector<bool> allowed(static_cast<std::size_t>(steps), true);
  for (int round = 0; round < budget; ++round) {
    const auto c = scorer.best(allowed);
    require(c.position >= 0, ErrorKind::InfeasibleStealth, "no admissible position left for the next edit");
    const TokenEdit e{c.position, c.token};
    scorer.commit(e);
    edits.push_back(e);
    allowed[static_cast<std::size_t>(e.position)] = false;
    if (stealth) {
      if (e.position > 0) allowed[static_cast<std::size_t>(e.position) - 1] = false;
      if (e.position + 1 < steps) allowed[static_cast<std::size_t>(e.position) + 1] = false;
    }
  }
  return edits;
}

namespace {

struct PairedPasses {
  ForwardPass clean, adv;
};

PairedPasses paired(const StackedModel& model, const std::vector<int>& tokens, const std::vector<TokenEdit>& edits) {
  return {forward_embedded(model, embed_tokens(model, tokens)),
          forward_embedded(model, embed_tokens(model, apply_edits(tokens, edits)))};
}

}  // namespace

std::vector<double> stiv_at_fractions(const StackedModel& model, const std::vector<int>& tokens,
                                      const std::vector<TokenEdit>& edits, const std::vector<double>& fractions) {
  const PairedPasses pp = paired(model, tokens, edits);
  const auto c = pp.clean.trajectories();
  const auto a = pp.adv.trajectories();
  std::vector<double> out;
  for (double f : fractions) out.push_back(layered_stiv(c, a, f));
  return out;
}

PerturbationRecord injection_record(const StackedModel& model, const std::vector<int>& tokens,
                                    const std::vector<TokenEdit>& edits, const std::string& strategy,
                                    double tau_fraction) {
  const PairedPasses pp = paired(model, tokens, edits);
  PerturbationRecord r;
  r.strategy = strategy;
  r.discrete = true;
  r.budget = static_cast<double>(edits.size());
  for (const auto& e : edits) {
    r.positions.push_back(e.position);
    r.substitutes.push_back(e.token);
  }
  r.adv_tokens = apply_edits(tokens, edits);
  r.delta_y_norm = (pp.adv.logits - pp.clean.logits).norm();
  r.stiv = layered_stiv(pp.clean.trajectories(), pp.adv.trajectories(), tau_fraction, &r.layer_stiv);
  return r;
}

PerturbationRecord inject_targeted(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                   double tau_fraction) {
  InjectionOptions opt;
  opt.tau_fraction = tau_fraction;
  auto r = injection_record(model, tokens, greedy_edits(model, tokens, budget, opt), "targeted", tau_fraction);
  r.budget = budget;
  return r;
}

PerturbationRecord inject_stealth(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                  double similarity_floor, double tau_fraction) {
  InjectionOptions opt;
  opt.tau_fraction = tau_fraction;
  opt.similarity_floor = similarity_floor;
  auto r = injection_record(model, tokens, greedy_edits(model, tokens, budget, opt), "stealth", tau_fraction);
  r.budget = budget;
  return r;
}

std::vector<TokenEdit> random_edits(const std::vector<int>& tokens, int budget, int alphabet_size,
                                    std::uint64_t seed) {
  const int steps = static_cast<int>(tokens.size());
  require(budget >= 0 && budget <= steps, ErrorKind::InvalidArgument, "budget must lie in [0, T]");
  require(alphabet_size >= 2, ErrorKind::InvalidArgument, "alphabet needs two symbols");
  Rng rng(seed, 0x7a4d);
  std::vector<int> idx(static_cast<std::size_t>(steps));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first `budget` slots are a uniform sample without replacement.
  for (int i = 0; i < budget; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.uniform_int(static_cast<std::uint64_t>(steps - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  std::vector<TokenEdit> edits;
  for (int i = 0; i < budget; ++i) {
    const int p = idx[static_cast<std::size_t>(i)];
    const int orig = tokens[static_cast<std::size_t>(p)];
    int tok = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(alphabet_size - 1)));
    if (tok >= orig) ++tok;
    edits.push_back({p, tok});
  }
  return edits;
}

PerturbationRecord inject_random(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                 std::uint64_t seed, double tau_fraction) {
  auto r = injection_record(model, tokens, random_edits(tokens, budget, model.alphabet_size, seed), "random",
                            tau_fraction);
  r.budget = budget;
  return r;
}

namespace {

void enumerate(const FirstLayerScorer& scorer, const std::vector<int>& tokens, int vocab, int budget, int start,
               std::vector<TokenEdit>& cur, double& best, std::vector<TokenEdit>* best_set) {
  if (static_cast<int>(cur.size()) == budget) {
    const double v = scorer.stiv_of(cur);
    if (v > best) {
      best = v;
      if (best_set) *best_set = cur;
    }
    return;
  }
  for (int p = start; p < static_cast<int>(tokens.size()); ++p) {
    for (int j = 0; j < vocab; ++j) {
      if (j == tokens[static_cast<std::size_t>(p)]) continue;
      cur.push_back({p, j});
      enumerate(scorer, tokens, vocab, budget, p + 1, cur, best, best_set);
      cur.pop_back();
    }
  }
}

}  // namespace

double exhaustive_best_stiv(const StackedModel& model, const std::vector<int>& tokens, int budget,
                            double tau_fraction, std::vector<TokenEdit>* best_set) {
  FirstLayerScorer scorer(model, tokens, tau_fraction);
  double best = -1.0;
  std::vector<TokenEdit> cur;
  enumerate(scorer, tokens, model.alphabet_size, budget, 0, cur, best, best_set);
  return std::max(best, 0.0);
}

}  // namespace ssmsec
