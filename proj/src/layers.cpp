#include "listennet/layers.hpp"

#include <cmath>
#include <string>

#include "listennet/kernels.hpp"

namespace listennet {

void ConvSpec::validate(int in_h, int in_w) const {
  if (groups < 1 || in_depth % groups != 0 || out_depth % groups != 0)
    throw ShapeError("conv groups=" + std::to_string(groups) + " must divide in_depth=" +
                     std::to_string(in_depth) + " and out_depth=" + std::to_string(out_depth));
  if (kh < 1 || kw < 1 || dh < 1 || dw < 1) throw ShapeError("conv kernel/dilation must be >= 1");
  if (out_h(in_h) < 1 || out_w(in_w) < 1)
    throw ShapeError("effective kernel (" + std::to_string((kh - 1) * dh + 1) + "," +
                     std::to_string((kw - 1) * dw + 1) + ") exceeds input (" +
                     std::to_string(in_h) + "," + std::to_string(in_w) + ")");
}

namespace {

// Tap offsets into x for one output-row base pointer x(b, group_base, i, 0),
// enumerated in weight order (c, u, v). Shared by forward and backward.
template <class T>
std::vector<std::ptrdiff_t> conv_tap_offsets(const ConvSpec& spec, const Tensor4T<T>& x) {
  const int cpg = spec.in_depth / spec.groups;
  std::vector<std::ptrdiff_t> offsets(static_cast<std::size_t>(cpg) * spec.kh * spec.kw);
  const std::ptrdiff_t depth_stride =
      static_cast<std::ptrdiff_t>(x.height()) * x.width();
  const std::ptrdiff_t row_stride = x.width();
  std::size_t t = 0;
  for (int c = 0; c < cpg; ++c)
    for (int u = 0; u < spec.kh; ++u)
      for (int v = 0; v < spec.kw; ++v)
        offsets[t++] = c * depth_stride + static_cast<std::ptrdiff_t>(u) * spec.dh * row_stride +
                       static_cast<std::ptrdiff_t>(v) * spec.dw;
  return offsets;
}

}  // namespace

template <class T>
std::pair<Tensor4T<T>, Conv2dCache<T>> conv2d_forward(const Tensor4T<T>& x, const ConvSpec& spec,
                                                      const ConvParams<T>& params) {
  if (x.depth() != spec.in_depth)
    throw ShapeError("conv input depth " + std::to_string(x.depth()) + " != spec.in_depth " +
                     std::to_string(spec.in_depth));
  spec.validate(x.height(), x.width());
  const int cpg = spec.in_depth / spec.groups;   // input depths per group
  const int opg = spec.out_depth / spec.groups;  // output depths per group
  if (params.weight.shape() != Shape4{spec.out_depth, cpg, spec.kh, spec.kw})
    throw ShapeError("conv weight shape inconsistent with the conv geometry");
  if (spec.bias && static_cast<int>(params.bias.size()) != spec.out_depth)
    throw ShapeError("conv bias length inconsistent with the conv geometry");

  const int ho = spec.out_h(x.height());
  const int wo = spec.out_w(x.width());
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::vector<std::ptrdiff_t> offsets = conv_tap_offsets(spec, x);
  const int taps = static_cast<int>(offsets.size());
  const bool pointwise = (spec.kh == 1 && spec.kw == 1);

  Tensor4T<T> out({x.batch(), spec.out_depth, ho, wo}, T(0));
  for (int b = 0; b < x.batch(); ++b) {
    for (int o = 0; o < spec.out_depth; ++o) {
      const int base_c = (o / opg) * cpg;
      const T* w_o = params.weight.data() + params.weight.offset(o, 0, 0, 0);
      if (spec.bias) {
        const T bv = params.bias[o];
        T* p = out.data() + out.offset(b, o, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) p[i] = bv;
      }
      if (pointwise) {
        // Input and output planes line up, one fused pass over the plane.
        kernels::axpy_taps(x.data() + x.offset(b, base_c, 0, 0),
                           out.data() + out.offset(b, o, 0, 0), w_o, offsets.data(), taps, plane);
      } else {
        for (int i = 0; i < ho; ++i)
          kernels::axpy_taps(x.data() + x.offset(b, base_c, i, 0),
                             out.data() + out.offset(b, o, i, 0), w_o, offsets.data(), taps,
                             static_cast<std::size_t>(wo));
      }
    }
  }
  return {std::move(out), Conv2dCache<T>{spec, x, params.weight}};
}

template <class T>
ConvGrads<T> conv2d_backward(const Conv2dCache<T>& cache, const Tensor4T<T>& grad_out) {
  const ConvSpec& spec = cache.spec;
  const Tensor4T<T>& x = cache.x;
  const int cpg = spec.in_depth / spec.groups;
  const int opg = spec.out_depth / spec.groups;
  const int ho = spec.out_h(x.height());
  const int wo = spec.out_w(x.width());
  if (grad_out.shape() != Shape4{x.batch(), spec.out_depth, ho, wo})
    throw ShapeError("conv grad_out shape mismatch");

  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const std::vector<std::ptrdiff_t> offsets = conv_tap_offsets(spec, x);
  const int taps = static_cast<int>(offsets.size());
  const bool pointwise = (spec.kh == 1 && spec.kw == 1);

  ConvGrads<T> g{Tensor4T<T>(x.shape(), T(0)), Tensor4T<T>(cache.weight.shape(), T(0)),
                 std::vector<T>(spec.bias ? spec.out_depth : 0, T(0))};
  for (int b = 0; b < x.batch(); ++b) {
    for (int o = 0; o < spec.out_depth; ++o) {
      const int base_c = (o / opg) * cpg;
      const T* w_o = cache.weight.data() + cache.weight.offset(o, 0, 0, 0);
      T* gw_o = g.weight.data() + g.weight.offset(o, 0, 0, 0);
      const T* grad_plane = grad_out.data() + grad_out.offset(b, o, 0, 0);
      if (spec.bias) g.bias[o] += kernels::sum(grad_plane, plane);
      if (pointwise) {
        kernels::dot_taps(grad_plane, x.data() + x.offset(b, base_c, 0, 0), gw_o, offsets.data(),
                          taps, plane);
      } else {
        for (int i = 0; i < ho; ++i) {
          const T* grad_row = grad_out.data() + grad_out.offset(b, o, i, 0);
          kernels::dot_taps(grad_row, x.data() + x.offset(b, base_c, i, 0), gw_o, offsets.data(),
                            taps, static_cast<std::size_t>(wo));
          kernels::axpy_taps_adj(grad_row, g.x.data() + g.x.offset(b, base_c, i, 0), w_o,
                                 offsets.data(), taps, static_cast<std::size_t>(wo));
        }
      }
    }
  }
  if (pointwise) {
    // grad_x of a pointwise conv is a pointwise conv with in/out transposed;
    // one fused pass per input plane instead of one scatter per output.
    std::vector<T> w_t(static_cast<std::size_t>(opg));
    std::vector<std::ptrdiff_t> out_offsets(static_cast<std::size_t>(opg));
    for (int oo = 0; oo < opg; ++oo)
      out_offsets[static_cast<std::size_t>(oo)] = static_cast<std::ptrdiff_t>(oo) * plane;
    for (int b = 0; b < x.batch(); ++b) {
      for (int gi = 0; gi < spec.groups; ++gi) {
        for (int c = 0; c < cpg; ++c) {
          for (int oo = 0; oo < opg; ++oo)
            w_t[static_cast<std::size_t>(oo)] = cache.weight.at(gi * opg + oo, c, 0, 0);
          kernels::axpy_taps(grad_out.data() + grad_out.offset(b, gi * opg, 0, 0),
                             g.x.data() + g.x.offset(b, gi * cpg + c, 0, 0), w_t.data(),
                             out_offsets.data(), opg, plane);
        }
      }
    }
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, BatchNormCache<T>> batchnorm_forward(const Tensor4T<T>& x,
                                                            BatchNormParams<T>& params,
                                                            bool training, T momentum, T eps) {
  const int d_count = x.depth();
  if (static_cast<int>(params.affine.gamma.size()) != d_count)
    throw ShapeError("batchnorm affine size mismatch");
  const std::size_t plane = static_cast<std::size_t>(x.height()) * x.width();
  const std::size_t m = static_cast<std::size_t>(x.batch()) * plane;

  BatchNormCache<T> cache;
  cache.training = training;
  cache.gamma = params.affine.gamma;
  cache.inv_std.resize(d_count);
  cache.x_hat = Tensor4T<T>(x.shape());
  Tensor4T<T> out(x.shape());

  for (int d = 0; d < d_count; ++d) {
    double mean, var;
    if (training) {
      double s = 0.0, sq = 0.0;
      for (int b = 0; b < x.batch(); ++b) {
        const T* p = x.data() + x.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          s += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      mean = s / static_cast<double>(m);
      var = sq / static_cast<double>(m) - mean * mean;
      if (var < 0.0) var = 0.0;
      params.running_mean[d] =
          static_cast<T>((1.0 - momentum) * params.running_mean[d] + momentum * mean);
      params.running_var[d] =
          static_cast<T>((1.0 - momentum) * params.running_var[d] + momentum * var);
    } else {
      mean = params.running_mean[d];
      var = params.running_var[d];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    cache.inv_std[d] = inv;
    const T mu = static_cast<T>(mean);
    const T gam = params.affine.gamma[d], bet = params.affine.beta[d];
    for (int b = 0; b < x.batch(); ++b) {
      const T* p = x.data() + x.offset(b, d, 0, 0);
      T* xh = cache.x_hat.data() + cache.x_hat.offset(b, d, 0, 0);
      T* po = out.data() + out.offset(b, d, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mu) * inv;
        po[i] = gam * xh[i] + bet;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <class T>
NormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor4T<T>& grad_out) {
  const Tensor4T<T>& xh = cache.x_hat;
  if (!grad_out.same_shape(xh)) throw ShapeError("batchnorm grad_out shape mismatch");
  const int d_count = xh.depth();
  const std::size_t plane = static_cast<std::size_t>(xh.height()) * xh.width();
  const std::size_t m = static_cast<std::size_t>(xh.batch()) * plane;

  NormGrads<T> g{Tensor4T<T>(xh.shape()), std::vector<T>(d_count, T(0)),
                 std::vector<T>(d_count, T(0))};
  for (int d = 0; d < d_count; ++d) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < xh.batch(); ++b) {
      const T* gp = grad_out.data() + grad_out.offset(b, d, 0, 0);
      const T* xp = xh.data() + xh.offset(b, d, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += gp[i];
        sum_gx += static_cast<double>(gp[i]) * xp[i];
      }
    }
    g.beta[d] = static_cast<T>(sum_g);
    g.gamma[d] = static_cast<T>(sum_gx);
    const T gam = cache.gamma[d];
    const T inv = cache.inv_std[d];
    if (cache.training) {
      const T mean_g = static_cast<T>(sum_g / static_cast<double>(m));
      const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(m));
      for (int b = 0; b < xh.batch(); ++b) {
        const T* gp = grad_out.data() + grad_out.offset(b, d, 0, 0);
        const T* xp = xh.data() + xh.offset(b, d, 0, 0);
        T* op = g.x.data() + g.x.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i)
          op[i] = gam * inv * (gp[i] - mean_g - xp[i] * mean_gx);
      }
    } else {
      for (int b = 0; b < xh.batch(); ++b) {
        const T* gp = grad_out.data() + grad_out.offset(b, d, 0, 0);
        T* op = g.x.data() + g.x.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) op[i] = gam * inv * gp[i];
      }
    }
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, GroupNormCache<T>> groupnorm_forward(const Tensor4T<T>& x,
                                                            const AffineParams<T>& params,
                                                            int num_groups, T eps) {
  const int d_count = x.depth();
  if (num_groups < 1 || d_count % num_groups != 0)
    throw ShapeError("groupnorm depth " + std::to_string(d_count) + " not divisible by " +
                     std::to_string(num_groups) + " groups");
  if (static_cast<int>(params.gamma.size()) != d_count)
    throw ShapeError("groupnorm affine size mismatch");
  const int dpg = d_count / num_groups;
  const std::size_t plane = static_cast<std::size_t>(x.height()) * x.width();
  const std::size_t m = static_cast<std::size_t>(dpg) * plane;

  GroupNormCache<T> cache;
  cache.num_groups = num_groups;
  cache.gamma = params.gamma;
  cache.inv_std.resize(static_cast<std::size_t>(x.batch()) * num_groups);
  cache.x_hat = Tensor4T<T>(x.shape());
  Tensor4T<T> out(x.shape());

  for (int b = 0; b < x.batch(); ++b) {
    for (int gi = 0; gi < num_groups; ++gi) {
      double s = 0.0, sq = 0.0;
      for (int dd = 0; dd < dpg; ++dd) {
        const T* p = x.data() + x.offset(b, gi * dpg + dd, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          s += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      const double mean = s / static_cast<double>(m);
      double var = sq / static_cast<double>(m) - mean * mean;
      if (var < 0.0) var = 0.0;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      cache.inv_std[static_cast<std::size_t>(b) * num_groups + gi] = inv;
      for (int dd = 0; dd < dpg; ++dd) {
        const int d = gi * dpg + dd;
        const T gam = params.gamma[d], bet = params.beta[d];
        const T* p = x.data() + x.offset(b, d, 0, 0);
        T* xh = cache.x_hat.data() + cache.x_hat.offset(b, d, 0, 0);
        T* po = out.data() + out.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          xh[i] = static_cast<T>((p[i] - mean) * inv);
          po[i] = gam * xh[i] + bet;
        }
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <class T>
NormGrads<T> groupnorm_backward(const GroupNormCache<T>& cache, const Tensor4T<T>& grad_out) {
  const Tensor4T<T>& xh = cache.x_hat;
  if (!grad_out.same_shape(xh)) throw ShapeError("groupnorm grad_out shape mismatch");
  const int d_count = xh.depth();
  const int num_groups = cache.num_groups;
  const int dpg = d_count / num_groups;
  const std::size_t plane = static_cast<std::size_t>(xh.height()) * xh.width();
  const std::size_t m = static_cast<std::size_t>(dpg) * plane;

  NormGrads<T> g{Tensor4T<T>(xh.shape()), std::vector<T>(d_count, T(0)),
                 std::vector<T>(d_count, T(0))};
  for (int b = 0; b < xh.batch(); ++b) {
    for (int gi = 0; gi < num_groups; ++gi) {
      // grad through x_hat carries gamma; the mean/var coupling is per group.
      double mean1 = 0.0, mean2 = 0.0;
      for (int dd = 0; dd < dpg; ++dd) {
        const int d = gi * dpg + dd;
        const T gam = cache.gamma[d];
        const T* gp = grad_out.data() + grad_out.offset(b, d, 0, 0);
        const T* xp = xh.data() + xh.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double gxh = static_cast<double>(gam) * gp[i];
          mean1 += gxh;
          mean2 += gxh * xp[i];
          g.beta[d] += gp[i];
          g.gamma[d] += gp[i] * xp[i];
        }
      }
      mean1 /= static_cast<double>(m);
      mean2 /= static_cast<double>(m);
      const T inv = cache.inv_std[static_cast<std::size_t>(b) * num_groups + gi];
      for (int dd = 0; dd < dpg; ++dd) {
        const int d = gi * dpg + dd;
        const T gam = cache.gamma[d];
        const T* gp = grad_out.data() + grad_out.offset(b, d, 0, 0);
        const T* xp = xh.data() + xh.offset(b, d, 0, 0);
        T* op = g.x.data() + g.x.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i)
          op[i] = static_cast<T>(inv * (gam * gp[i] - mean1 - xp[i] * mean2));
      }
    }
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, LinearCache<T>> linear_forward(const Tensor4T<T>& x,
                                                      const LinearParams<T>& params) {
  const int in = x.width();
  const int out_n = params.weight.batch();
  if (x.depth() != 1 || x.height() != 1) throw ShapeError("linear input must be (B,1,1,in)");
  if (params.weight.width() != in)
    throw ShapeError("linear input width " + std::to_string(in) + " != weight in " +
                     std::to_string(params.weight.width()));
  Tensor4T<T> logits({x.batch(), 1, 1, out_n});
  for (int b = 0; b < x.batch(); ++b) {
    const T* xr = x.data() + x.offset(b, 0, 0, 0);
    for (int o = 0; o < out_n; ++o) {
      logits.at(b, 0, 0, o) =
          kernels::dot(xr, params.weight.data() + params.weight.offset(o, 0, 0, 0),
                       static_cast<std::size_t>(in)) +
          (params.bias.empty() ? T(0) : params.bias[o]);
    }
  }
  return {std::move(logits), LinearCache<T>{x, params.weight}};
}

template <class T>
LinearGrads<T> linear_backward(const LinearCache<T>& cache, const Tensor4T<T>& grad_out) {
  const Tensor4T<T>& x = cache.x;
  const int in = x.width();
  const int out_n = cache.weight.batch();
  if (grad_out.shape() != Shape4{x.batch(), 1, 1, out_n})
    throw ShapeError("linear grad_out shape mismatch");
  LinearGrads<T> g{Tensor4T<T>(x.shape(), T(0)), Tensor4T<T>(cache.weight.shape(), T(0)),
                   std::vector<T>(out_n, T(0))};
  for (int b = 0; b < x.batch(); ++b) {
    const T* xr = x.data() + x.offset(b, 0, 0, 0);
    T* gx = g.x.data() + g.x.offset(b, 0, 0, 0);
    for (int o = 0; o < out_n; ++o) {
      const T go = grad_out.at(b, 0, 0, o);
      g.bias[o] += go;
      kernels::axpy(go, cache.weight.data() + cache.weight.offset(o, 0, 0, 0), gx,
                    static_cast<std::size_t>(in));
      kernels::axpy(go, xr, g.weight.data() + g.weight.offset(o, 0, 0, 0),
                    static_cast<std::size_t>(in));
    }
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, GeluCache<T>> gelu_forward(const Tensor4T<T>& x) {
  GeluCache<T> cache{x, Tensor4T<T>(x.shape())};
  Tensor4T<T> y(x.shape());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T xv = x.data()[i];
    const T cdf = T(0.5) * (T(1) + std::erf(xv * inv_sqrt2));
    cache.cdf.data()[i] = cdf;
    y.data()[i] = xv * cdf;
  }
  return {std::move(y), std::move(cache)};
}

template <class T>
Tensor4T<T> gelu_backward(const GeluCache<T>& cache, const Tensor4T<T>& grad_out) {
  if (!grad_out.same_shape(cache.x)) throw ShapeError("gelu grad_out shape mismatch");
  Tensor4T<T> g(cache.x.shape());
  const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * static_cast<T>(M_PI));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T xv = cache.x.data()[i];
    const T pdf = std::exp(T(-0.5) * xv * xv) * inv_sqrt2pi;
    g.data()[i] = grad_out.data()[i] * (cache.cdf.data()[i] + xv * pdf);
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, SigmoidCache<T>> sigmoid_forward(const Tensor4T<T>& x) {
  Tensor4T<T> y = sigmoid(x);
  return {y, SigmoidCache<T>{y}};
}

template <class T>
Tensor4T<T> sigmoid_backward(const SigmoidCache<T>& cache, const Tensor4T<T>& grad_out) {
  if (!grad_out.same_shape(cache.y)) throw ShapeError("sigmoid grad_out shape mismatch");
  Tensor4T<T> g(cache.y.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T y = cache.y.data()[i];
    g.data()[i] = grad_out.data()[i] * y * (T(1) - y);
  }
  return g;
}

template <class T>
std::pair<Tensor4T<T>, SoftmaxCache<T>> softmax_forward(const Tensor4T<T>& x, Axis axis) {
  Tensor4T<T> y = softmax_axis(x, axis);
  return {y, SoftmaxCache<T>{y, axis}};
}

template <class T>
Tensor4T<T> softmax_backward(const SoftmaxCache<T>& cache, const Tensor4T<T>& grad_out) {
  const Tensor4T<T>& y = cache.y;
  if (!grad_out.same_shape(y)) throw ShapeError("softmax grad_out shape mismatch");
  const int ax = static_cast<int>(cache.axis);
  Tensor4T<T> g(y.shape());
  Shape4 s = y.shape();
  std::array<int, 3> rest{};
  {
    int k = 0;
    for (int a = 0; a < 4; ++a)
      if (a != ax) rest[k++] = a;
  }
  Shape4 idx{0, 0, 0, 0};
  for (int i0 = 0; i0 < s[rest[0]]; ++i0)
    for (int i1 = 0; i1 < s[rest[1]]; ++i1)
      for (int i2 = 0; i2 < s[rest[2]]; ++i2) {
        idx[rest[0]] = i0;
        idx[rest[1]] = i1;
        idx[rest[2]] = i2;
        T dotv = T(0);
        for (int a = 0; a < s[ax]; ++a) {
          idx[ax] = a;
          dotv += grad_out.at(idx[0], idx[1], idx[2], idx[3]) * y.at(idx[0], idx[1], idx[2], idx[3]);
        }
        for (int a = 0; a < s[ax]; ++a) {
          idx[ax] = a;
          g.at(idx[0], idx[1], idx[2], idx[3]) =
              y.at(idx[0], idx[1], idx[2], idx[3]) *
              (grad_out.at(idx[0], idx[1], idx[2], idx[3]) - dotv);
        }
      }
  return g;
}

#define LISTENNET_INSTANTIATE_LAYERS(T)                                                          \
  template std::pair<Tensor4T<T>, Conv2dCache<T>> conv2d_forward<T>(                             \
      const Tensor4T<T>&, const ConvSpec&, const ConvParams<T>&);                                \
  template ConvGrads<T> conv2d_backward<T>(const Conv2dCache<T>&, const Tensor4T<T>&);           \
  template std::pair<Tensor4T<T>, BatchNormCache<T>> batchnorm_forward<T>(                       \
      const Tensor4T<T>&, BatchNormParams<T>&, bool, T, T);                                      \
  template NormGrads<T> batchnorm_backward<T>(const BatchNormCache<T>&, const Tensor4T<T>&);     \
  template std::pair<Tensor4T<T>, GroupNormCache<T>> groupnorm_forward<T>(                       \
      const Tensor4T<T>&, const AffineParams<T>&, int, T);                                       \
  template NormGrads<T> groupnorm_backward<T>(const GroupNormCache<T>&, const Tensor4T<T>&);     \
  template std::pair<Tensor4T<T>, LinearCache<T>> linear_forward<T>(const Tensor4T<T>&,          \
                                                                    const LinearParams<T>&);     \
  template LinearGrads<T> linear_backward<T>(const LinearCache<T>&, const Tensor4T<T>&);         \
  template std::pair<Tensor4T<T>, GeluCache<T>> gelu_forward<T>(const Tensor4T<T>&);             \
  template Tensor4T<T> gelu_backward<T>(const GeluCache<T>&, const Tensor4T<T>&);                \
  template std::pair<Tensor4T<T>, SigmoidCache<T>> sigmoid_forward<T>(const Tensor4T<T>&);       \
  template Tensor4T<T> sigmoid_backward<T>(const SigmoidCache<T>&, const Tensor4T<T>&);          \
  template std::pair<Tensor4T<T>, SoftmaxCache<T>> softmax_forward<T>(const Tensor4T<T>&, Axis); \
  template Tensor4T<T> softmax_backward<T>(const SoftmaxCache<T>&, const Tensor4T<T>&);

LISTENNET_INSTANTIATE_LAYERS(float)
LISTENNET_INSTANTIATE_LAYERS(double)

#undef LISTENNET_INSTANTIATE_LAYERS

}  // namespace listennet
