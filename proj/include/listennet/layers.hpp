#pragma once

#include <utility>
#include <vector>

#include "listennet/tensor.hpp"

namespace listennet {

// Grouped, dilated, valid (no padding), stride-1 2-D convolution geometry.
// Covers all four roles in the network: pointwise 1x1, depthwise temporal
// (1,k0), depthwise spatial (C,1), and the dilated temporal (1,k) family.
struct ConvSpec {
  int in_depth = 1;
  int out_depth = 1;
  int kh = 1, kw = 1;
  int dh = 1, dw = 1;
  int groups = 1;
  bool bias = true;

  int out_h(int in_h) const { return in_h - (kh - 1) * dh; }
  int out_w(int in_w) const { return in_w - (kw - 1) * dw; }
  void validate(int in_h, int in_w) const;
};

template <class T>
struct ConvParams {
  Tensor4T<T> weight;        // (out_depth, in_depth/groups, kh, kw)
  std::vector<T> bias;       // length out_depth, empty if spec.bias == false
};

template <class T>
struct AffineParams {
  std::vector<T> gamma, beta;  // per depth
};

template <class T>
struct BatchNormParams {
  AffineParams<T> affine;
  std::vector<T> running_mean, running_var;
};

template <class T>
struct LinearParams {
  Tensor4T<T> weight;   // (out, 1, 1, in)
  std::vector<T> bias;  // length out
};

// ---- caches: each holds exactly what its backward needs --------------------

template <class T>
struct Conv2dCache {
  ConvSpec spec;
  Tensor4T<T> x;
  Tensor4T<T> weight;
};

template <class T>
struct BatchNormCache {
  Tensor4T<T> x_hat;
  std::vector<T> inv_std;  // per depth
  std::vector<T> gamma;
  bool training = true;
};

template <class T>
struct GroupNormCache {
  Tensor4T<T> x_hat;
  std::vector<T> inv_std;  // per (sample, group)
  std::vector<T> gamma;
  int num_groups = 1;
};

template <class T>
struct LinearCache {
  Tensor4T<T> x;
  Tensor4T<T> weight;
};

template <class T>
struct GeluCache {
  Tensor4T<T> x;    // pre-activation
  Tensor4T<T> cdf;  // Phi(x), reused by backward
};

template <class T>
struct SigmoidCache {
  Tensor4T<T> y;  // output
};

template <class T>
struct SoftmaxCache {
  Tensor4T<T> y;
  Axis axis = Axis::Depth;
};

template <class T>
struct ConvGrads {
  Tensor4T<T> x;
  Tensor4T<T> weight;
  std::vector<T> bias;
};

template <class T>
struct NormGrads {
  Tensor4T<T> x;
  std::vector<T> gamma, beta;
};

template <class T>
struct LinearGrads {
  Tensor4T<T> x;
  Tensor4T<T> weight;
  std::vector<T> bias;
};

// ---- operations -------------------------------------------------------------

template <class T>
std::pair<Tensor4T<T>, Conv2dCache<T>> conv2d_forward(const Tensor4T<T>& x, const ConvSpec& spec,
                                                      const ConvParams<T>& params);

template <class T>
ConvGrads<T> conv2d_backward(const Conv2dCache<T>& cache, const Tensor4T<T>& grad_out);

// Per-depth statistics over (batch, height, width). Training mode normalizes
// with batch statistics (population variance) and updates the running stats;
// inference uses the running stats.
template <class T>
std::pair<Tensor4T<T>, BatchNormCache<T>> batchnorm_forward(const Tensor4T<T>& x,
                                                            BatchNormParams<T>& params,
                                                            bool training, T momentum, T eps);

template <class T>
NormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor4T<T>& grad_out);

// Per-sample normalization over (group depths, height, width).
template <class T>
std::pair<Tensor4T<T>, GroupNormCache<T>> groupnorm_forward(const Tensor4T<T>& x,
                                                            const AffineParams<T>& params,
                                                            int num_groups, T eps);

template <class T>
NormGrads<T> groupnorm_backward(const GroupNormCache<T>& cache, const Tensor4T<T>& grad_out);

// x viewed as (B,1,1,in), logits (B,1,1,out) = x W^T + b.
template <class T>
std::pair<Tensor4T<T>, LinearCache<T>> linear_forward(const Tensor4T<T>& x,
                                                      const LinearParams<T>& params);

template <class T>
LinearGrads<T> linear_backward(const LinearCache<T>& cache, const Tensor4T<T>& grad_out);

template <class T>
std::pair<Tensor4T<T>, GeluCache<T>> gelu_forward(const Tensor4T<T>& x);
template <class T>
Tensor4T<T> gelu_backward(const GeluCache<T>& cache, const Tensor4T<T>& grad_out);

template <class T>
std::pair<Tensor4T<T>, SigmoidCache<T>> sigmoid_forward(const Tensor4T<T>& x);
template <class T>
Tensor4T<T> sigmoid_backward(const SigmoidCache<T>& cache, const Tensor4T<T>& grad_out);

template <class T>
std::pair<Tensor4T<T>, SoftmaxCache<T>> softmax_forward(const Tensor4T<T>& x, Axis axis);
template <class T>
Tensor4T<T> softmax_backward(const SoftmaxCache<T>& cache, const Tensor4T<T>& grad_out);

}  // namespace listennet
