#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/model.hpp"
#include "ssmsec/pgd.hpp"
#include "ssmsec/record.hpp"
#include "ssmsec/ssm.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ssmsec {

// ---- Discrete token injection ----

struct TokenEdit {
  int position = 0;
  int token = 0;
};

struct InjectionOptions {
  double tau_fraction = 0.1;
  // > 0 enables the stealth constraint: no two edited positions adjacent and
  // token similarity 1 - edits / T kept at or above the floor.
  double similarity_floor = 0.0;
};

// First-layer StIV scorer used by the greedy search. LTI first layers are
// scored incrementally from impulse responses; other layers fall back to a
// rescan per candidate.
class FirstLayerScorer {
 public:
  FirstLayerScorer(const StackedModel& model, const std::vector<int>& tokens, double tau_fraction);

  double tau() const { return tau_; }
  int steps() const { return static_cast<int>(tokens_.size()); }
  // StIV count and soft score of the committed edits.
  int corrupted() const;
  // First-layer StIV (fraction of T+1 steps) for an arbitrary edit set, by rescan.
  double stiv_of(const std::vector<TokenEdit>& edits) const;

  struct Candidate {
    int position = -1;
    int token = -1;
    int count = -1;
    double soft = -1.0;
  };
  // Best single additional edit under the ordering: count, soft score, lower position, lower token.
  Candidate best(const std::vector<bool>& allowed) const;
  void commit(const TokenEdit& edit);
  const std::vector<int>& current_tokens() const { return current_; }

 private:
  RowMat rescan(const std::vector<int>& tokens) const;
  void evaluate(const RowMat& dev_rows, int first_row, Candidate& out, int position, int token) const;

  const StackedModel& model_;
  std::vector<int> tokens_;
  std::vector<int> current_;
  bool fast_ = false;
  Vec a_bar_;
  RowMat drive_;   // V x N token drive vectors
  RowMat powers_;  // (T+1) x N, row k = a_bar^k
  RowMat clean_;   // (T+1) x W
  RowMat dev_;     // (T+1) x W, adv - clean for the committed edits
  double tau_ = 0.0;
};

// Greedy edit path. Prefixes of the result are the greedy solutions at smaller budgets.
std::vector<TokenEdit> greedy_edits(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                    const InjectionOptions& opt = {});

// Full-model record for an edit set: per-layer StIV with per-layer tau, averaged over layers.
PerturbationRecord injection_record(const StackedModel& model, const std::vector<int>& tokens,
                                    const std::vector<TokenEdit>& edits, const std::string& strategy,
                                    double tau_fraction = 0.1);
// Layer-averaged StIV at several tau fractions from one pair of forward passes.
std::vector<double> stiv_at_fractions(const StackedModel& model, const std::vector<int>& tokens,
                                      const std::vector<TokenEdit>& edits, const std::vector<double>& fractions);

PerturbationRecord inject_targeted(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                   double tau_fraction = 0.1);
PerturbationRecord inject_stealth(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                  double similarity_floor, double tau_fraction = 0.1);
std::vector<TokenEdit> random_edits(const std::vector<int>& tokens, int budget, int alphabet_size,
                                    std::uint64_t seed);
PerturbationRecord inject_random(const StackedModel& model, const std::vector<int>& tokens, int budget,
                                 std::uint64_t seed, double tau_fraction = 0.1);

// Brute force over every edit set of size `budget` (first-layer StIV). Test oracle for small inputs.
double exhaustive_best_stiv(const StackedModel& model, const std::vector<int>& tokens, int budget,
                            double tau_fraction = 0.1, std::vector<TokenEdit>* best = nullptr);

std::vector<int> apply_edits(const std::vector<int>& tokens, const std::vector<TokenEdit>& edits);

// ---- Continuous attacks ----

// Maximizes ||logits(x + delta) - logits(x)||_2 over the l_inf ball with PGD.
PerturbationRecord pgd_output_attack(const StackedModel& model, const RowMat& x, double epsilon, int steps = 20,
                                     std::uint64_t seed = 0);
// Uniform l_inf-ball baseline with the same budget.
PerturbationRecord random_output_perturbation(const StackedModel& model, const RowMat& x, double epsilon,
                                              std::uint64_t seed);

enum class GateMode { Freeze, Erase };
const char* to_string(GateMode m);

struct SelectionResult {
  PerturbationRecord record;
  double gate_sum_clean = 0.0;
  double gate_sum_adv = 0.0;
  double sfr_clean = 0.0, ser_clean = 0.0;
  double sfr_adv = 0.0, ser_adv = 0.0;
};

// PGD-40 with step eps/4 on the summed selective gates (minimized for freeze, maximized for erase).
SelectionResult selection_subversion(const StackedModel& model, const RowMat& x, double epsilon, GateMode mode,
                                     int steps = 40, std::uint64_t seed = 0);

// ---- Haystack documents ----

enum class HaystackMode { Benign, Low, High };
const char* to_string(HaystackMode m);
double default_entropy_target(HaystackMode m);

struct Haystack {
  std::vector<int> tokens;
  int needle_position = 0;
  double entropy = 0.0;
  double target = 0.0;
};

// Tokens are drawn with exact quotas from a truncated geometric distribution over
// the alphabet whose decay is solved to hit the target entropy. A negative target
// selects the mode's default.
Haystack make_haystack(int length, const std::vector<int>& needle, double position_fraction, HaystackMode mode,
                       double target_bits, int alphabet_size, std::uint64_t seed);

// ---- Extraction ----

using BlackBoxOracle = std::function<Vec(const Vec& u)>;

// Counts oracle calls on a single-input single-output LTI system.
class CountingOracle {
 public:
  explicit CountingOracle(DiscreteSsm sys, double noise = 0.0, std::uint64_t seed = 0);
  Vec operator()(const Vec& u);
  long long queries() const { return queries_; }
  const DiscreteSsm& system() const { return sys_; }

 private:
  DiscreteSsm sys_;
  double noise_;
  std::uint64_t seed_;
  long long queries_ = 0;
};

struct ExtractionResult {
  std::string method;
  long long query_count = 0;
  Vec a_bar;  // recovered poles (real parts for complex pairs)
  Mat a_hat, b_hat, c_hat;  // realization up to similarity
  Vec markov_estimate;      // C A^k B for k = 0..2N-1
  double relative_error = 0.0;
  bool executed = true;     // false when only the closed-form count was produced
};

long long ssd_query_count(int n);
long long generic_query_count(int n);

// N basis impulses x N amplitude levels, each a length-2N sequence, then Ho-Kalman realization.
ExtractionResult ssd_extract(CountingOracle& oracle, int n, double delta_target);
// N^3 random probe sequences of length 2N and a least-squares fit of the 2N Markov parameters.
ExtractionResult generic_extract(CountingOracle& oracle, int n, double delta_target, std::uint64_t seed = 0);
// Relative Frobenius error of the length-L impulse responses.
double impulse_response_error(const DiscreteSsm& truth, const Mat& a_hat, const Mat& b_hat, const Mat& c_hat,
                              int length);

// ---- Logging ----

std::string attack_log_line(const PerturbationRecord& r);

}  // namespace ssmsec
