#pragma once

#include "ssmsec/config.hpp"
#include "ssmsec/model.hpp"
#include "ssmsec/report.hpp"
#include "ssmsec/train.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace ssmsec {

// Model and training defaults per experiment; every field can be overridden
// from the config with the same key (e.g. `embed_offset = 1.5`).
ModelSpec e1_model_spec(const ExperimentConfig& cfg);
TrainConfig e1_train_config(const ExperimentConfig& cfg, std::uint64_t seed);
ModelSpec e2_model_spec(const ExperimentConfig& cfg);
ModelSpec e4_model_spec(const ExperimentConfig& cfg);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index must write only its own output slot.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

ExperimentReport run_e1(const ExperimentConfig& cfg);
ExperimentReport run_e2(const ExperimentConfig& cfg);
ExperimentReport run_e3(const ExperimentConfig& cfg);
ExperimentReport run_e4(const ExperimentConfig& cfg);
ExperimentReport run_e5(const ExperimentConfig& cfg);
ExperimentReport run_mvalidation(const ExperimentConfig& cfg);
// Dispatches on cfg.id.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Pieces of the M validation that acceptance checks reuse.
struct M3Benchmark {
  double tpr = 0.0;
  double fpr = 0.0;
  double localized = 0.0;  // fraction of spiked streams with exactly one alert within 2 steps of the spike
};
M3Benchmark m3_spike_benchmark(int streams, int length, int spike_at, std::uint64_t seed);

struct M1Check {
  double omega_star = 0.0;
  double attack_energy_reduction = 0.0;  // 1 - filtered / raw energy of the omega* sinusoid
  double dc_gain = 0.0;                  // filtered / raw mean of a constant input
};
M1Check m1_check(std::uint64_t seed, int steps = 4096);

struct M2Check {
  int pairs = 0;
  int bleeds = 0;  // pairs where session A's outputs or state hash changed because of session B
};
M2Check m2_isolation_check(int pairs, std::uint64_t seed);

}  // namespace ssmsec
