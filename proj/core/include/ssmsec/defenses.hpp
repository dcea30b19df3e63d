#pragma once

#include "ssmsec/common.hpp"
#include "ssmsec/filter.hpp"
#include "ssmsec/model.hpp"
#include "ssmsec/spectral.hpp"
#include "ssmsec/ssm.hpp"
#include "ssmsec/train.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace ssmsec {

// ---- M1: spectral input filtering ----

// Stop bands around every contiguous run of grid gains above gamma = mean + 2 std.
// Each band is centred on the run's peak and is at least +-half_bandwidth wide.
std::vector<BandstopSpec> m1_bands(const GainProfile& profile, double half_bandwidth = 0.1, int order = 4);

// Butterworth bandstop per band, zero phase, every column independently.
RowMat m1_filter(const RowMat& u, const std::vector<BandstopSpec>& bands);
RowMat m1_filter(const RowMat& u, const GainProfile& profile, double half_bandwidth = 0.1);

// Token inputs: removes the DFT components of the embedded sequence whose
// frequency lies in a stop band (an orthogonal projection along time).
RowMat m1_project(const RowMat& embedded, const std::vector<BandstopSpec>& bands);

// ---- M2: session state isolation ----

struct SessionKey {
  std::string user_id;
  std::string session_id;
  auto operator<=>(const SessionKey&) const = default;
  std::string str() const { return user_id + "/" + session_id; }
};

struct AuditRecord {
  double ts = 0.0;
  std::string key;
  std::string event;
  std::uint64_t hash = 0;
};

// 64-bit FNV-1a over the little-endian bytes of every state vector.
std::uint64_t state_hash(const std::vector<Vec>& states);

using Clock = std::function<double()>;  // seconds
inline constexpr double kDefaultIdleLimit = 30.0 * 60.0;

class SessionStatePool {
 public:
  // h0 holds the initial state of every layer; clock defaults to steady_clock seconds.
  explicit SessionStatePool(std::vector<Vec> h0, Clock clock = {}, double idle_limit = kDefaultIdleLimit);

  // Copy of the key's states, creating a fresh h0 entry on first use.
  std::vector<Vec> get_or_create(const SessionKey& key);
  void put(const SessionKey& key, std::vector<Vec> states);
  void reset(const SessionKey& key);
  // Resets every entry idle for at least the idle limit; returns how many were reset.
  int sweep();
  bool contains(const SessionKey& key) const;
  std::size_t size() const;
  std::vector<AuditRecord> audit() const;
  std::string audit_jsonl() const;
  const std::vector<Vec>& initial_state() const { return h0_; }

 private:
  struct Entry {
    std::vector<Vec> states;
    double last_access = 0.0;
  };
  void reset_locked(const SessionKey& key, Entry& e, const char* event);

  std::vector<Vec> h0_;
  Clock clock_;
  double idle_limit_;
  mutable std::mutex mu_;
  std::map<SessionKey, Entry> entries_;
  std::vector<AuditRecord> audit_;
};

// Runs one request through the model from the session's stored state and stores the final states.
Vec m2_serve(SessionStatePool& pool, const SessionKey& key, const StackedModel& model, const RowMat& embedded);

// ---- Monitors ----

enum class AlertKind { TrajectorySpike, EntropyExceeded };
const char* to_string(AlertKind k);

struct MonitorAlert {
  int t = 0;
  AlertKind kind = AlertKind::TrajectorySpike;
  double score = 0.0;
  double threshold = 0.0;
  double input_side_z = 0.0;
};

struct M3Options {
  double alpha = 0.99;
  double z_threshold = 4.0;
  double input_z_threshold = 0.1;
  int warmup = 100;  // steps used only to seed the averages
};

// states: (T+1) x W trajectory; inputs: T x D, row t-1 drives state row t.
// Tracks EMA mean and EMA variance of ||h_t - h_{t-1}||; the input side tracks
// the per-step change of ||u_t|| the same way.
std::vector<MonitorAlert> m3_monitor(const RowMat& states, const RowMat& inputs, const M3Options& opt = {});

inline constexpr double kDefaultEntropyLimit = 5.5;
std::vector<MonitorAlert> m4_monitor(const RowMat& states, int window = 64, double h_max = kDefaultEntropyLimit);

// CSV with header t,kind,score,threshold.
std::string alerts_to_csv(const std::vector<MonitorAlert>& alerts);

// ---- M5: Gaussian mechanism ----

double m5_sigma(double eps_dp, double delta_dp, double sensitivity);

struct NoiseAudit {
  double eps_dp = 0.0;
  double delta_dp = 0.0;
  double sensitivity = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string json() const;
};

// Rows must satisfy ||u_t||_2 <= sensitivity. An infinite eps_dp adds no noise.
RowMat m5_gaussian(const RowMat& u, double eps_dp, double delta_dp, double sensitivity, std::uint64_t seed,
                   std::vector<NoiseAudit>* audit = nullptr);
// Scales every row to norm at most `bound`.
RowMat normalize_rows(const RowMat& u, double bound = 1.0);

// ---- M6: spectral robustness training ----

// Keeps the DCT-II components whose frequency pi k / T lies in [lo, hi], per column.
RowMat band_project(const RowMat& delta, double lo, double hi);
// Fraction of the signal's DCT energy inside [lo, hi].
double band_energy_fraction(const RowMat& delta, double lo, double hi);

// Worst-case frequency of the first layer (LTI: exact transfer gain; selective: linearized at x).
double first_layer_peak(const StackedModel& model, const RowMat& x);

struct SpectralTrainConfig {
  TrainConfig train;
  double epsilon = 0.0;         // l2 radius of the inner perturbation
  double half_bandwidth = 0.1;  // delta omega
  int refresh_every = 20;       // SGD steps between peak re-estimates
  int inner_steps = 5;
};

struct SpectralTrainResult {
  TrainResult result;
  std::vector<double> peaks;  // omega* after every refresh
  double max_delta_norm = 0.0;
  double min_band_fraction = 1.0;
};

SpectralTrainResult m6_spectral_training(const StackedModel& model, const Dataset& data,
                                         const SpectralTrainConfig& cfg);

}  // namespace ssmsec
