#include "listennet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "listennet/kernels.hpp"

namespace listennet {

namespace {

std::string shape_str(const Shape4& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
         std::to_string(s[2]) + "," + std::to_string(s[3]) + ")";
}

template <class T>
std::size_t checked_count(const Shape4& shape) {
  const std::size_t max_elems = std::numeric_limits<std::size_t>::max() / sizeof(T);
  std::size_t count = 1;
  for (int e : shape) {
    if (e < 0) throw ShapeError("negative extent in " + shape_str(shape));
    if (e > 0 && count > max_elems / static_cast<std::size_t>(e))
      throw SizeError("extent product overflows addressable size for " + shape_str(shape));
    count *= static_cast<std::size_t>(e);
  }
  return count;
}

}  // namespace

template <class T>
Tensor4T<T>::Tensor4T(Shape4 shape, T fill) : shape_(shape), data_(checked_count<T>(shape), fill) {}

template <class T>
Tensor4T<T> Tensor4T<T>::reshaped(Shape4 new_shape) const {
  if (checked_count<T>(new_shape) != data_.size())
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                     " changes element count");
  Tensor4T out;
  out.shape_ = new_shape;
  out.data_ = data_;
  return out;
}

template <class T>
Tensor4T<T> matmul_batched(const Tensor4T<T>& a, const Tensor4T<T>& b) {
  if (a.depth() != 1 || b.depth() != 1)
    throw ShapeError("matmul_batched expects depth-1 views");
  if (a.batch() != b.batch())
    throw ShapeError("matmul_batched batch mismatch " + std::to_string(a.batch()) + " vs " +
                     std::to_string(b.batch()));
  if (a.width() != b.height())
    throw ShapeError("matmul_batched inner extent mismatch " + std::to_string(a.width()) +
                     " vs " + std::to_string(b.height()));
  const int n = a.batch(), p = a.height(), q = a.width(), r = b.width();
  Tensor4T<T> out({n, 1, p, r}, T(0));
  for (int bi = 0; bi < n; ++bi) {
    for (int i = 0; i < p; ++i) {
      T* out_row = out.data() + out.offset(bi, 0, i, 0);
      for (int k = 0; k < q; ++k) {
        kernels::axpy(a.at(bi, 0, i, k), b.data() + b.offset(bi, 0, k, 0), out_row,
                      static_cast<std::size_t>(r));
      }
    }
  }
  return out;
}

template <class T>
Tensor4T<T> concat_depth(const std::vector<const Tensor4T<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_depth on empty list");
  const Tensor4T<T>& first = *parts.front();
  int total_depth = 0;
  for (const auto* p : parts) {
    if (p->batch() != first.batch() || p->height() != first.height() ||
        p->width() != first.width())
      throw ShapeError("concat_depth extent mismatch " + shape_str(p->shape()) + " vs " +
                       shape_str(first.shape()));
    total_depth += p->depth();
  }
  Tensor4T<T> out({first.batch(), total_depth, first.height(), first.width()});
  const std::size_t plane = static_cast<std::size_t>(first.height()) * first.width();
  for (int b = 0; b < first.batch(); ++b) {
    int d0 = 0;
    for (const auto* p : parts) {
      std::copy_n(p->data() + p->offset(b, 0, 0, 0),
                  static_cast<std::size_t>(p->depth()) * plane,
                  out.data() + out.offset(b, d0, 0, 0));
      d0 += p->depth();
    }
  }
  return out;
}

template <class T>
Tensor4T<T> slice_time_last(const Tensor4T<T>& x, int t_keep) {
  if (t_keep <= 0 || t_keep > x.width())
    throw ShapeError("slice_time_last t_keep=" + std::to_string(t_keep) + " out of range for width " +
                     std::to_string(x.width()));
  Tensor4T<T> out({x.batch(), x.depth(), x.height(), t_keep});
  const int skip = x.width() - t_keep;
  for (int b = 0; b < x.batch(); ++b)
    for (int d = 0; d < x.depth(); ++d)
      for (int h = 0; h < x.height(); ++h)
        std::copy_n(x.data() + x.offset(b, d, h, skip), t_keep,
                    out.data() + out.offset(b, d, h, 0));
  return out;
}

template <class T>
Tensor4T<T> slice_time_last_backward(const Tensor4T<T>& grad_out, int w_in) {
  if (w_in < grad_out.width()) throw ShapeError("slice_time_last_backward w_in too small");
  Tensor4T<T> out({grad_out.batch(), grad_out.depth(), grad_out.height(), w_in}, T(0));
  const int skip = w_in - grad_out.width();
  for (int b = 0; b < grad_out.batch(); ++b)
    for (int d = 0; d < grad_out.depth(); ++d)
      for (int h = 0; h < grad_out.height(); ++h)
        std::copy_n(grad_out.data() + grad_out.offset(b, d, h, 0), grad_out.width(),
                    out.data() + out.offset(b, d, h, skip));
  return out;
}

namespace {

inline int region_lo(int i, int in, int out) {
  return static_cast<int>((static_cast<long long>(i) * in) / out);
}
inline int region_hi(int i, int in, int out) {
  return static_cast<int>((static_cast<long long>(i + 1) * in + out - 1) / out);
}

}  // namespace

namespace {

struct PoolRegions {
  std::vector<int> lo, hi;
  std::vector<double> inv;  // 1/(hi-lo)
};

PoolRegions pool_regions(int in, int out) {
  PoolRegions r;
  r.lo.resize(static_cast<std::size_t>(out));
  r.hi.resize(static_cast<std::size_t>(out));
  r.inv.resize(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    r.lo[static_cast<std::size_t>(i)] = region_lo(i, in, out);
    r.hi[static_cast<std::size_t>(i)] = region_hi(i, in, out);
    r.inv[static_cast<std::size_t>(i)] =
        1.0 / (r.hi[static_cast<std::size_t>(i)] - r.lo[static_cast<std::size_t>(i)]);
  }
  return r;
}

}  // namespace

template <class T>
Tensor4T<T> adaptive_avg_pool(const Tensor4T<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("adaptive_avg_pool output extents must be >= 1");
  if (x.height() == 0 || x.width() == 0)
    throw ShapeError("adaptive_avg_pool on zero-extent axis");
  const PoolRegions rh = pool_regions(x.height(), out_h);
  const PoolRegions rw = pool_regions(x.width(), out_w);
  Tensor4T<T> out({x.batch(), x.depth(), out_h, out_w});
  const int in_w = x.width();
  for (int b = 0; b < x.batch(); ++b) {
    for (int d = 0; d < x.depth(); ++d) {
      const T* plane = x.data() + x.offset(b, d, 0, 0);
      T* dst = out.data() + out.offset(b, d, 0, 0);
      for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
          double acc = 0.0;
          for (int h = rh.lo[i]; h < rh.hi[i]; ++h) {
            const T* row = plane + static_cast<std::size_t>(h) * in_w;
            for (int w = rw.lo[j]; w < rw.hi[j]; ++w) acc += row[w];
          }
          dst[static_cast<std::size_t>(i) * out_w + j] = static_cast<T>(acc * rh.inv[i] * rw.inv[j]);
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor4T<T> adaptive_avg_pool_backward(const Tensor4T<T>& grad_out, Shape4 in_shape) {
  Tensor4T<T> grad_in(in_shape, T(0));
  const int in_h = in_shape[2], in_w = in_shape[3];
  const PoolRegions rh = pool_regions(in_h, grad_out.height());
  const PoolRegions rw = pool_regions(in_w, grad_out.width());
  for (int b = 0; b < grad_out.batch(); ++b) {
    for (int d = 0; d < grad_out.depth(); ++d) {
      const T* gsrc = grad_out.data() + grad_out.offset(b, d, 0, 0);
      T* plane = grad_in.data() + grad_in.offset(b, d, 0, 0);
      for (int i = 0; i < grad_out.height(); ++i) {
        for (int j = 0; j < grad_out.width(); ++j) {
          const T g = static_cast<T>(gsrc[static_cast<std::size_t>(i) * grad_out.width() + j] *
                                     rh.inv[i] * rw.inv[j]);
          for (int h = rh.lo[i]; h < rh.hi[i]; ++h) {
            T* row = plane + static_cast<std::size_t>(h) * in_w;
            for (int w = rw.lo[j]; w < rw.hi[j]; ++w) row[w] += g;
          }
        }
      }
    }
  }
  return grad_in;
}

template <class T>
Tensor4T<T> linear_resize_time(const Tensor4T<T>& x, int t_out) {
  if (x.height() != 1) throw ShapeError("linear_resize_time expects height 1");
  if (x.width() < 1 || t_out < 1) throw ShapeError("linear_resize_time needs width,t_out >= 1");
  const int w_in = x.width();
  Tensor4T<T> out({x.batch(), x.depth(), 1, t_out});
  for (int j = 0; j < t_out; ++j) {
    double s = (j + 0.5) * static_cast<double>(w_in) / t_out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(w_in - 1));
    int l = static_cast<int>(std::floor(s));
    double f = s - l;
    if (l >= w_in - 1) {
      l = w_in - 1;
      f = 0.0;
    }
    for (int b = 0; b < x.batch(); ++b) {
      for (int d = 0; d < x.depth(); ++d) {
        const T a = x.at(b, d, 0, l);
        const T c = (f > 0.0) ? x.at(b, d, 0, l + 1) : a;
        out.at(b, d, 0, j) = static_cast<T>((1.0 - f) * a + f * c);
      }
    }
  }
  return out;
}

template <class T>
Tensor4T<T> linear_resize_time_backward(const Tensor4T<T>& grad_out, int w_in) {
  Tensor4T<T> grad_in({grad_out.batch(), grad_out.depth(), 1, w_in}, T(0));
  const int t_out = grad_out.width();
  for (int j = 0; j < t_out; ++j) {
    double s = (j + 0.5) * static_cast<double>(w_in) / t_out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(w_in - 1));
    int l = static_cast<int>(std::floor(s));
    double f = s - l;
    if (l >= w_in - 1) {
      l = w_in - 1;
      f = 0.0;
    }
    for (int b = 0; b < grad_out.batch(); ++b) {
      for (int d = 0; d < grad_out.depth(); ++d) {
        const T g = grad_out.at(b, d, 0, j);
        grad_in.at(b, d, 0, l) += static_cast<T>((1.0 - f) * g);
        if (f > 0.0) grad_in.at(b, d, 0, l + 1) += static_cast<T>(f * g);
      }
    }
  }
  return grad_in;
}

template <class T>
T gelu_scalar(T x) {
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x / std::sqrt(static_cast<T>(2))));
}

template <class T>
T sigmoid_scalar(T x) {
  return static_cast<T>(1) / (static_cast<T>(1) + std::exp(-x));
}

template <class T>
T gelu_grad_scalar(T x) {
  const T phi = std::exp(static_cast<T>(-0.5) * x * x) /
                std::sqrt(static_cast<T>(2) * static_cast<T>(M_PI));
  const T Phi = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x / std::sqrt(static_cast<T>(2))));
  return Phi + x * phi;
}

template <class T>
Tensor4T<T> gelu(const Tensor4T<T>& x) {
  Tensor4T<T> out(x.shape());
  const T* in = x.data();
  T* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = gelu_scalar(in[i]);
  return out;
}

template <class T>
Tensor4T<T> sigmoid(const Tensor4T<T>& x) {
  Tensor4T<T> out(x.shape());
  const T* in = x.data();
  T* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = sigmoid_scalar(in[i]);
  return out;
}

template <class T>
Tensor4T<T> softmax_axis(const Tensor4T<T>& x, Axis axis) {
  const int ax = static_cast<int>(axis);
  if (x.shape()[ax] < 1) throw ShapeError("softmax over empty axis");
  Tensor4T<T> out(x.shape());
  // Walk every line along `axis` via the three complementary loops.
  Shape4 s = x.shape();
  const int extent = s[ax];
  Shape4 idx{0, 0, 0, 0};
  const std::array<int, 3> rest = [&] {
    std::array<int, 3> r{};
    int k = 0;
    for (int a = 0; a < 4; ++a)
      if (a != ax) r[k++] = a;
    return r;
  }();
  for (int i0 = 0; i0 < s[rest[0]]; ++i0) {
    for (int i1 = 0; i1 < s[rest[1]]; ++i1) {
      for (int i2 = 0; i2 < s[rest[2]]; ++i2) {
        idx[rest[0]] = i0;
        idx[rest[1]] = i1;
        idx[rest[2]] = i2;
        T mx = -std::numeric_limits<T>::infinity();
        for (int a = 0; a < extent; ++a) {
          idx[ax] = a;
          mx = std::max(mx, x.at(idx[0], idx[1], idx[2], idx[3]));
        }
        T denom = T(0);
        for (int a = 0; a < extent; ++a) {
          idx[ax] = a;
          const T e = std::exp(x.at(idx[0], idx[1], idx[2], idx[3]) - mx);
          out.at(idx[0], idx[1], idx[2], idx[3]) = e;
          denom += e;
        }
        for (int a = 0; a < extent; ++a) {
          idx[ax] = a;
          out.at(idx[0], idx[1], idx[2], idx[3]) /= denom;
        }
      }
    }
  }
  return out;
}

template <class T>
void add_inplace(Tensor4T<T>& y, const Tensor4T<T>& x) {
  if (!y.same_shape(x)) throw ShapeError("add_inplace shape mismatch");
  kernels::add(x.data(), y.data(), y.size());
}

template <class T>
void mul_inplace(Tensor4T<T>& y, const Tensor4T<T>& x) {
  if (!y.same_shape(x)) throw ShapeError("mul_inplace shape mismatch");
  kernels::hadamard(x.data(), y.data(), y.size());
}

Tensor4d widen(const Tensor4& x) {
  Tensor4d out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i];
  return out;
}

Tensor4 narrow(const Tensor4d& x) {
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = static_cast<float>(x.data()[i]);
  return out;
}

#define LISTENNET_INSTANTIATE_TENSOR(T)                                                       \
  template class Tensor4T<T>;                                                                 \
  template Tensor4T<T> matmul_batched<T>(const Tensor4T<T>&, const Tensor4T<T>&);             \
  template Tensor4T<T> concat_depth<T>(const std::vector<const Tensor4T<T>*>&);               \
  template Tensor4T<T> slice_time_last<T>(const Tensor4T<T>&, int);                           \
  template Tensor4T<T> slice_time_last_backward<T>(const Tensor4T<T>&, int);                  \
  template Tensor4T<T> adaptive_avg_pool<T>(const Tensor4T<T>&, int, int);                    \
  template Tensor4T<T> adaptive_avg_pool_backward<T>(const Tensor4T<T>&, Shape4);             \
  template Tensor4T<T> linear_resize_time<T>(const Tensor4T<T>&, int);                        \
  template Tensor4T<T> linear_resize_time_backward<T>(const Tensor4T<T>&, int);               \
  template Tensor4T<T> gelu<T>(const Tensor4T<T>&);                                           \
  template Tensor4T<T> sigmoid<T>(const Tensor4T<T>&);                                        \
  template Tensor4T<T> softmax_axis<T>(const Tensor4T<T>&, Axis);                             \
  template void add_inplace<T>(Tensor4T<T>&, const Tensor4T<T>&);                             \
  template void mul_inplace<T>(Tensor4T<T>&, const Tensor4T<T>&);                             \
  template T gelu_scalar<T>(T);                                                               \
  template T sigmoid_scalar<T>(T);                                                            \
  template T gelu_grad_scalar<T>(T);

LISTENNET_INSTANTIATE_TENSOR(float)
LISTENNET_INSTANTIATE_TENSOR(double)

#undef LISTENNET_INSTANTIATE_TENSOR

}  // namespace listennet
