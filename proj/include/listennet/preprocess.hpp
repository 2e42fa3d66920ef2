#pragma once

#include <string>
#include <vector>

#include "listennet/errors.hpp"

namespace listennet {

enum class Label : int { Left = 0, Right = 1 };

// One trial: C channels by S samples, channel-major, with the trial-level
// attended direction.
struct Recording {
  std::string subject_id;
  std::string trial_id;
  float fs = 0.0f;
  int channels = 0;
  long long samples = 0;
  std::vector<float> data;  // channel-major, channels * samples
  Label label = Label::Left;

  float& at(int c, long long s) { return data[static_cast<std::size_t>(c) * samples + s]; }
  float at(int c, long long s) const { return data[static_cast<std::size_t>(c) * samples + s]; }
};

// A fixed-length labeled segment cut from one recording.
struct DecisionWindow {
  std::vector<float> data;  // channel-major, channels * length
  int channels = 0;
  int length = 0;
  Label label = Label::Left;
  std::string subject_id;
  std::string trial_id;
  long long start_sample = 0;

  float at(int c, int t) const { return data[static_cast<std::size_t>(c) * length + t]; }
};

// Inverse square root of the scope's mean per-window covariance, symmetric
// positive definite, stored row-major C x C in double.
struct AlignmentMatrix {
  std::string scope_id;
  int channels = 0;
  std::vector<double> m;

  double at(int r, int c) const { return m[static_cast<std::size_t>(r) * channels + c]; }
};

// Per-channel mean 0 / population std 1 over the whole recording (std floor
// 1e-8; constant channels map to zero with a warning).
Recording zscore_normalize(const Recording& rec);

// Windows start at 0, stride, 2*stride, ... while start+win_len <= S.
std::vector<DecisionWindow> make_windows(const Recording& rec, int win_len, int stride);

// Mean per-window covariance (population 1/T scaling), then the inverse
// square root via symmetric eigendecomposition with eigenvalue floor 1e-10.
AlignmentMatrix compute_alignment(const std::vector<DecisionWindow>& windows,
                                  const std::string& scope_id);

DecisionWindow apply_alignment(const DecisionWindow& window, const AlignmentMatrix& matrix);

// Cyclic Jacobi eigendecomposition of a symmetric matrix, row-major n x n.
// Eigenvectors returned as columns of v. Deterministic sweep order.
void symmetric_eigen(const std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& v);

}  // namespace listennet
