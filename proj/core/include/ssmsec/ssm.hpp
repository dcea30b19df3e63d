#pragma once

#include "ssmsec/common.hpp"

#include <string>
#include <vector>

namespace ssmsec {

// A diagonal mode. Real modes use one state slot. A complex mode uses two
// consecutive slots (x, y) holding z = x + iy and represents the conjugate
// pair {lambda, conj(lambda)}; its input row is beta = b[2k] + i b[2k+1] and
// its output contribution is Re((c[:,2k] - i c[:,2k+1]) z).
struct Mode {
  cdouble value;
  bool pair = false;
  int width() const { return pair ? 2 : 1; }
};

int state_width(const std::vector<Mode>& modes);
bool has_pairs(const std::vector<Mode>& modes);

class ContinuousSsm {
 public:
  ContinuousSsm(std::vector<Mode> modes, Mat b, Mat c, Mat d);
  static ContinuousSsm real_diagonal(const Vec& a, Mat b, Mat c, Mat d);

  const std::vector<Mode>& modes() const { return modes_; }
  const Mat& b() const { return b_; }
  const Mat& c() const { return c_; }
  const Mat& d() const { return d_; }
  int n_state() const { return static_cast<int>(b_.rows()); }
  int d_io() const { return static_cast<int>(d_.rows()); }

 private:
  std::vector<Mode> modes_;
  Mat b_, c_, d_;
};

class DiscreteSsm {
 public:
  DiscreteSsm(std::vector<Mode> modes, Mat b_bar, Mat c, Mat d, double step = 1.0);
  static DiscreteSsm real_diagonal(const Vec& a_bar, Mat b_bar, Mat c, Mat d, double step = 1.0);

  const std::vector<Mode>& modes() const { return modes_; }
  const Mat& b_bar() const { return b_bar_; }
  const Mat& c() const { return c_; }
  const Mat& d() const { return d_; }
  double step() const { return step_; }
  int n_state() const { return static_cast<int>(b_bar_.rows()); }
  int d_io() const { return static_cast<int>(d_.rows()); }
  bool has_pairs() const { return has_pairs_; }
  // Real transition diagonal; only meaningful when !has_pairs().
  const Vec& a_real() const { return a_real_; }

 private:
  std::vector<Mode> modes_;
  Mat b_bar_, c_, d_;
  double step_;
  bool has_pairs_;
  Vec a_real_;
};

// Per-channel selective layer. State is D x N, flattened as c * N + n.
struct SelectiveSsm {
  Vec a_log;     // N, positive
  Mat w_delta;   // N x D
  Vec b_delta;   // N
  Mat w_b;       // N x D
  Mat c;         // D x N
  Vec d;         // D, diagonal feedthrough

  int n_state() const { return static_cast<int>(a_log.size()); }
  int channels() const { return static_cast<int>(c.rows()); }
  int state_width() const { return n_state() * channels(); }
  void validate() const;
  // LTI system obtained by freezing the gates at (a_bar, b_bar), each of size N.
  DiscreteSsm frozen(const Vec& a_bar, const Vec& b_bar) const;
};

struct StateTrajectory {
  RowMat states;  // (T+1) x width, row 0 is h_0
  int layer_index = 0;
  std::string seq_id;

  int steps() const { return static_cast<int>(states.rows()) - 1; }
  int width() const { return static_cast<int>(states.cols()); }
};

struct ScanResult {
  RowMat y;  // T x D
  StateTrajectory traj;
};

struct SelectiveScanResult {
  RowMat y;
  StateTrajectory traj;
  RowMat delta;  // T x N, softplus output
  RowMat a_bar;  // T x N
  RowMat b_bar;  // T x N
};

Mat hippo_legs(int n);
// Continuous diagonal spectrum of hippo_legs(n) (it is lower triangular).
Vec hippo_legs_diagonal(int n);

DiscreteSsm zoh_discretize(const ContinuousSsm& sys, double step);

ScanResult lti_scan(const DiscreteSsm& sys, const RowMat& u, const Vec& h0);
ScanResult lti_scan(const DiscreteSsm& sys, const RowMat& u);

// K_t = C A^t B for t = 0..length-1; element t is D x D.
std::vector<Mat> conv_kernel(const DiscreteSsm& sys, int length);
// y_t = sum_{s<=t} K_{t-s} u_s + D u_t.
RowMat conv_apply(const std::vector<Mat>& kernel, const Mat& d, const RowMat& u);

double softplus(double x);
SelectiveScanResult selective_scan(const SelectiveSsm& sys, const RowMat& u, const Vec& h0);
SelectiveScanResult selective_scan(const SelectiveSsm& sys, const RowMat& u);

}  // namespace ssmsec
