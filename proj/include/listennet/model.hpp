#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "listennet/layers.hpp"
#include "listennet/tensor.hpp"

namespace listennet {

// Architecture hyperparameters. Defaults match the reference configuration:
// d_depth=16, k0=8, dilated kernels {1,2,3,5}, dilation 1, G=8.
struct ModelConfig {
  int channels = 64;          // EEG channels C
  int window_len = 128;       // decision window length T in samples
  int d_depth = 16;
  int k0 = 8;
  std::array<int, 4> mste_kernels{1, 2, 3, 5};
  int dilation = 1;
  int groups = 8;             // attention groups G = floor(d_depth/2)
  bool use_mste = true;
  bool use_cna = true;
  int num_classes = 2;

  void validate() const;
  int t_prime() const { return window_len - k0 + 1; }
  int t_min() const { return t_prime() - (mste_kernels[3] - 1) * dilation; }
};

inline ModelConfig make_model_config(int channels, int window_len) {
  ModelConfig c;
  c.channels = channels;
  c.window_len = window_len;
  return c;
}

template <class T>
struct ListenNetParamsT {
  ConvParams<T> stde_t_pw, stde_t_dw;  // 1->d_depth pointwise, (1,k0) depthwise
  ConvParams<T> stde_s_pw, stde_s_dw;  // d_depth->d_depth pointwise, (C,1) depthwise
  std::array<ConvParams<T>, 4> mste_branch;  // dilated d_depth -> d_depth/4, (1,k)
  BatchNormParams<T> mste_bn;
  ConvParams<T> mste_skip;             // (C,1) depthwise over U
  AffineParams<T> cna_gn_t, cna_gn_s;  // per-branch group-norm affines
  ConvParams<T> cna_fuse;              // (d_depth+1) -> 1 pointwise
  LinearParams<T> classifier;          // d_depth -> num_classes

  // Visits every trainable buffer in a fixed order (running stats excluded).
  void for_each_trainable(const std::function<void(const std::string&, T*, std::size_t)>& fn);
  void for_each_trainable(
      const std::function<void(const std::string&, const T*, std::size_t)>& fn) const;
  std::size_t trainable_count() const;
};

using ListenNetParams = ListenNetParamsT<float>;
template <class T>
using ParamGradsT = ListenNetParamsT<T>;

ListenNetParamsT<double> widen_params(const ListenNetParams& p);
ListenNetParams narrow_params(const ListenNetParamsT<double>& p);

// All tensors allocated at their config-determined shapes, every value zero
// (running variances one). Used for gradient accumulators and optimizer state.
template <class T>
ListenNetParamsT<T> zero_params(const ModelConfig& config);

// Conv/linear weights uniform in +/-sqrt(6/fan_in), biases zero, gammas one,
// betas zero; identical draw sequence for the float and double instantiations.
template <class T>
ListenNetParamsT<T> init_params(const ModelConfig& config, std::uint64_t seed);

// ---- forward caches ---------------------------------------------------------

template <class T>
struct StdeCache {
  Conv2dCache<T> pw_t, dw_t, pw_s, dw_s;
  GeluCache<T> act_t, act_s;
};

template <class T>
struct MsteCache {
  bool enabled = true;
  std::array<Conv2dCache<T>, 4> branch;
  std::array<int, 4> branch_w{};  // pre-truncation widths
  BatchNormCache<T> bn;
  Conv2dCache<T> skip;
  int t_min = 0, t_prime = 0;
};

template <class T>
struct GateCache {
  Tensor4T<T> x;         // branch input (grouped)
  Tensor4T<T> gs, gt;    // sigmoid(AAP_S), sigmoid(AAP_T)
  GroupNormCache<T> gn;
};

template <class T>
struct CnaCache {
  bool enabled = true;
  int g = 1, c = 1;
  Shape4 et_shape{}, es_shape{};  // pre-grouping shapes
  GateCache<T> gate_t, gate_s;
  Tensor4T<T> f1, f2;    // gated + group-normalized branches
  Tensor4T<T> a1, a2;    // (N,1,1,c) attention rows
  Tensor4T<T> f_s;       // raw grouped spatial branch
  Conv2dCache<T> fuse;
  Tensor4T<T> sig_w;     // sigmoid of the fused time weights
};

template <class T>
struct ClassifyCache {
  Shape4 e_shape{};
  LinearCache<T> linear;
  SoftmaxCache<T> softmax;
};

template <class T>
struct ModelCacheT {
  ModelConfig config;
  bool training = true;
  bool consumed = false;
  StdeCache<T> stde;
  MsteCache<T> mste;
  Shape4 et_full_shape{};  // E_t shape before depth alignment
  CnaCache<T> cna;
  ClassifyCache<T> cls;
  // Intermediates kept for shape auditing and tests.
  Tensor4T<T> e_t, e_s, u, s, e_s_prime, e_t_aligned, e;
};

using ModelCache = ModelCacheT<float>;

// ---- model operations ---------------------------------------------------------

template <class T>
struct StdeOut {
  Tensor4T<T> e_t, e_s;
  StdeCache<T> cache;
};

template <class T>
StdeOut<T> stde_forward(const Tensor4T<T>& x, const ListenNetParamsT<T>& params,
                        const ModelConfig& config);

template <class T>
struct MsteOut {
  Tensor4T<T> e_s_prime;
  Tensor4T<T> u, s;  // intermediates (empty when disabled)
  MsteCache<T> cache;
};

template <class T>
MsteOut<T> mste_forward(const Tensor4T<T>& e_t, const Tensor4T<T>& e_s,
                        ListenNetParamsT<T>& params, const ModelConfig& config, bool training);

// Parameter-free height alignment C -> d_depth by adaptive average pooling.
template <class T>
Tensor4T<T> depth_align(const Tensor4T<T>& e_t, int d_depth);

template <class T>
struct CnaOut {
  Tensor4T<T> e;
  CnaCache<T> cache;
};

template <class T>
CnaOut<T> cna_forward(const Tensor4T<T>& e_t_aligned, const Tensor4T<T>& e_s_prime,
                      const ListenNetParamsT<T>& params, const ModelConfig& config);

template <class T>
struct ClassifyOut {
  Tensor4T<T> probs;  // (B,1,1,num_classes)
  ClassifyCache<T> cache;
};

template <class T>
ClassifyOut<T> classify(const Tensor4T<T>& e, const ListenNetParamsT<T>& params);

template <class T>
struct ModelOut {
  Tensor4T<T> probs;
  ModelCacheT<T> cache;
};

template <class T>
ModelOut<T> model_forward(const Tensor4T<T>& batch, ListenNetParamsT<T>& params,
                          const ModelConfig& config, bool training);

// Exact adjoint of model_forward for the cached computation. The cache is
// consumed; reusing it throws UsageError.
template <class T>
ParamGradsT<T> model_backward(ModelCacheT<T>& cache, const Tensor4T<T>& grad_probs);

// Trainable scalar count, closed form over the layer table.
long long count_params(const ModelConfig& config);

// Multiply-accumulates for a batch-1 forward: convolutions and the linear
// layer by out_elements * (kh*kw*in_depth/groups), plus the two cross-attention
// matrix products; activations/norms/pooling excluded.
long long count_macs(const ModelConfig& config);

}  // namespace listennet
