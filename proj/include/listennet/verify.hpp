#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "listennet/layers.hpp"
#include "listennet/preprocess.hpp"
#include "listennet/tensor.hpp"

// Independent oracles for the optimized paths: a naive six-loop convolution
// reference, central finite differences for every backward pass, and direct
// recomputation of the alignment whitening identity. Everything here runs in
// double precision and shares no code with the implementations it checks.

namespace listennet {

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int checked = 0;
  bool pass = false;
};

// Direct evaluation of the grouped dilated valid convolution, six nested
// loops, no kernel reuse.
Tensor4d naive_conv(const Tensor4d& x, const ConvSpec& spec, const ConvParams<double>& params);

// Central finite differences of `eval` with respect to `sample_count` randomly
// chosen entries of `values`, compared against `analytic`. The relative error
// denominator is max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(const std::string& op, const std::function<double()>& eval,
                                  double* values, const double* analytic, std::size_t count,
                                  double eps, double gate, int sample_count, std::mt19937_64& rng);

// Frobenius distance between the scope's mean per-window covariance (after
// alignment) and the identity.
double check_alignment(const std::vector<DecisionWindow>& aligned_windows);

// The full battery: per-layer checks at 1e-4, end-to-end toy model at 1e-3,
// printed one line per report. Returns the reports; all must pass.
std::vector<GradCheckReport> run_gradient_battery(std::uint64_t seed, bool verbose);

// Optimized conv (double instantiation, shared template with the float path)
// vs naive reference over randomized specs covering the four conv roles.
// Returns the max absolute deviation observed.
double run_conv_oracle_battery(int spec_count, std::uint64_t seed, bool verbose);

// Windows of correlated Gaussian data (random mixing of white noise), far
// from whitened; used to exercise the alignment identity and its negative
// control.
std::vector<DecisionWindow> make_correlated_scope(int channels, int window_count, int length,
                                                  std::mt19937_64& rng);

}  // namespace listennet
