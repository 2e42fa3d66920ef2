#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "listennet/errors.hpp"

namespace listennet {

using Shape4 = std::array<int, 4>;

// Dense rank-4 tensor of floats (or doubles for the verification shadow
// path). Row-major, contiguous, axis convention (batch, depth, height,
// width) everywhere; offset(b,d,h,w) = ((b*n1+d)*n2+h)*n3+w.
template <class T>
class Tensor4T {
 public:
  Tensor4T() : shape_{0, 0, 0, 0} {}
  Tensor4T(Shape4 shape, T fill = T(0));

  const Shape4& shape() const { return shape_; }
  int batch() const { return shape_[0]; }
  int depth() const { return shape_[1]; }
  int height() const { return shape_[2]; }
  int width() const { return shape_[3]; }

  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::size_t offset(int b, int d, int h, int w) const {
    return ((static_cast<std::size_t>(b) * shape_[1] + d) * shape_[2] + h) * shape_[3] + w;
  }
  T& at(int b, int d, int h, int w) { return data_[offset(b, d, h, w)]; }
  const T& at(int b, int d, int h, int w) const { return data_[offset(b, d, h, w)]; }

  // Same buffer under a new shape; element count must match.
  Tensor4T reshaped(Shape4 new_shape) const;

  bool same_shape(const Tensor4T& o) const { return shape_ == o.shape_; }
  void fill(T v) { data_.assign(data_.size(), v); }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

enum class Axis { Batch = 0, Depth = 1, Height = 2, Width = 3 };

template <class T>
Tensor4T<T> tensor_new(Shape4 shape, T fill) {
  return Tensor4T<T>(shape, fill);
}

// Batched matrix product: a viewed as (N,1,p,q), b as (N,1,q,r) -> (N,1,p,r).
template <class T>
Tensor4T<T> matmul_batched(const Tensor4T<T>& a, const Tensor4T<T>& b);

// Concatenate along the depth axis; all parts must agree on batch/height/width.
template <class T>
Tensor4T<T> concat_depth(const std::vector<const Tensor4T<T>*>& parts);

// Keep the last t_keep columns of the width (time) axis.
template <class T>
Tensor4T<T> slice_time_last(const Tensor4T<T>& x, int t_keep);

// Adaptive average pooling over (height, width); output cell (i,j) averages
// the input region [floor(i*H/oh), ceil((i+1)*H/oh)) x [floor(j*W/ow), ceil((j+1)*W/ow)).
template <class T>
Tensor4T<T> adaptive_avg_pool(const Tensor4T<T>& x, int out_h, int out_w);

// Adjoint of adaptive_avg_pool for a given input shape.
template <class T>
Tensor4T<T> adaptive_avg_pool_backward(const Tensor4T<T>& grad_out, Shape4 in_shape);

// Linear interpolation along time with half-pixel sampling, height must be 1.
template <class T>
Tensor4T<T> linear_resize_time(const Tensor4T<T>& x, int t_out);

template <class T>
Tensor4T<T> linear_resize_time_backward(const Tensor4T<T>& grad_out, int w_in);

// Zero-pads the removed prefix back (adjoint of slice_time_last).
template <class T>
Tensor4T<T> slice_time_last_backward(const Tensor4T<T>& grad_out, int w_in);

// Elementwise maps. GELU is the exact erf form 0.5*x*(1+erf(x/sqrt(2))).
template <class T>
Tensor4T<T> gelu(const Tensor4T<T>& x);
template <class T>
Tensor4T<T> sigmoid(const Tensor4T<T>& x);

// Softmax along one axis with max subtraction.
template <class T>
Tensor4T<T> softmax_axis(const Tensor4T<T>& x, Axis axis);

// y += x / y *= x, shapes must match exactly.
template <class T>
void add_inplace(Tensor4T<T>& y, const Tensor4T<T>& x);
template <class T>
void mul_inplace(Tensor4T<T>& y, const Tensor4T<T>& x);

template <class T>
T gelu_scalar(T x);
template <class T>
T sigmoid_scalar(T x);
template <class T>
T gelu_grad_scalar(T x);  // Phi(x) + x*phi(x)

// float <-> double conversions for the gradient-check shadow path.
Tensor4d widen(const Tensor4& x);
Tensor4 narrow(const Tensor4d& x);

}  // namespace listennet
