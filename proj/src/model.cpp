#include "listennet/model.hpp"

#include <cassert>
#include <cmath>
#include <random>
#include <string>

#include "listennet/kernels.hpp"

namespace listennet {

void ModelConfig::validate() const {
  if (channels < 1 || window_len < 1) throw ConfigError("channels and window_len must be >= 1");
  if (d_depth < 4 || d_depth % 4 != 0)
    throw ConfigError("d_depth must be a positive multiple of 4 (branch width d_depth/4)");
  if (groups < 1 || d_depth % groups != 0) throw ConfigError("d_depth must be divisible by groups");
  if (k0 < 1 || dilation < 1) throw ConfigError("k0 and dilation must be >= 1");
  int max_k = 0;
  for (int k : mste_kernels) {
    if (k < 1) throw ConfigError("mste kernels must be >= 1");
    max_k = std::max(max_k, k);
  }
  if (window_len <= (k0 - 1) + (max_k - 1) * dilation)
    throw ConfigError("window_len too short for k0 and the largest dilated kernel");
  if (num_classes != 2) throw ConfigError("binary attention decoding expects num_classes == 2");
}

namespace {

// Layer geometry shared by init, forward, and the audit.
ConvSpec spec_stde_t_pw(const ModelConfig& c) { return {1, c.d_depth, 1, 1, 1, 1, 1, true}; }
ConvSpec spec_stde_t_dw(const ModelConfig& c) {
  return {c.d_depth, c.d_depth, 1, c.k0, 1, 1, c.d_depth, true};
}
ConvSpec spec_stde_s_pw(const ModelConfig& c) {
  return {c.d_depth, c.d_depth, 1, 1, 1, 1, 1, true};
}
ConvSpec spec_stde_s_dw(const ModelConfig& c) {
  return {c.d_depth, c.d_depth, c.channels, 1, 1, 1, c.d_depth, true};
}
ConvSpec spec_mste_branch(const ModelConfig& c, int i) {
  return {c.d_depth, c.d_depth / 4, 1, c.mste_kernels[static_cast<std::size_t>(i)],
          1, c.dilation, 1, true};
}
ConvSpec spec_mste_skip(const ModelConfig& c) {
  return {c.d_depth, c.d_depth, c.channels, 1, 1, 1, c.d_depth, true};
}
ConvSpec spec_cna_fuse(const ModelConfig& c) { return {c.d_depth + 1, 1, 1, 1, 1, 1, 1, true}; }

long long conv_param_count(const ConvSpec& s) {
  long long w = static_cast<long long>(s.out_depth) * (s.in_depth / s.groups) * s.kh * s.kw;
  return w + (s.bias ? s.out_depth : 0);
}

long long conv_mac_count(const ConvSpec& s, int in_h, int in_w) {
  const long long out_elems =
      static_cast<long long>(s.out_depth) * s.out_h(in_h) * s.out_w(in_w);
  return out_elems * (static_cast<long long>(s.kh) * s.kw * (s.in_depth / s.groups));
}

template <class P, class F>
void visit_trainable(P& p, F&& f) {
  auto conv = [&](const std::string& name, auto& cp) {
    f(name + ".weight", cp.weight.data(), cp.weight.size());
    if (!cp.bias.empty()) f(name + ".bias", cp.bias.data(), cp.bias.size());
  };
  auto affine = [&](const std::string& name, auto& ap) {
    f(name + ".gamma", ap.gamma.data(), ap.gamma.size());
    f(name + ".beta", ap.beta.data(), ap.beta.size());
  };
  conv("stde_t.pw", p.stde_t_pw);
  conv("stde_t.dw", p.stde_t_dw);
  conv("stde_s.pw", p.stde_s_pw);
  conv("stde_s.dw", p.stde_s_dw);
  for (int i = 0; i < 4; ++i) conv("mste.branch" + std::to_string(i), p.mste_branch[i]);
  affine("mste.bn", p.mste_bn.affine);
  conv("mste.skip", p.mste_skip);
  affine("cna.gn_t", p.cna_gn_t);
  affine("cna.gn_s", p.cna_gn_s);
  conv("cna.fuse", p.cna_fuse);
  f("classifier.weight", p.classifier.weight.data(), p.classifier.weight.size());
  f("classifier.bias", p.classifier.bias.data(), p.classifier.bias.size());
}

}  // namespace

template <class T>
void ListenNetParamsT<T>::for_each_trainable(
    const std::function<void(const std::string&, T*, std::size_t)>& fn) {
  visit_trainable(*this, fn);
}

template <class T>
void ListenNetParamsT<T>::for_each_trainable(
    const std::function<void(const std::string&, const T*, std::size_t)>& fn) const {
  visit_trainable(*this, fn);
}

template <class T>
std::size_t ListenNetParamsT<T>::trainable_count() const {
  std::size_t n = 0;
  for_each_trainable([&](const std::string&, const T*, std::size_t len) { n += len; });
  return n;
}

namespace {

template <class T>
ConvParams<T> make_conv(const ConvSpec& s, T fill = T(0)) {
  ConvParams<T> p;
  p.weight = Tensor4T<T>({s.out_depth, s.in_depth / s.groups, s.kh, s.kw}, fill);
  if (s.bias) p.bias.assign(static_cast<std::size_t>(s.out_depth), T(0));
  return p;
}

template <class T>
ListenNetParamsT<T> make_params_structure(const ModelConfig& c) {
  ListenNetParamsT<T> p;
  p.stde_t_pw = make_conv<T>(spec_stde_t_pw(c));
  p.stde_t_dw = make_conv<T>(spec_stde_t_dw(c));
  p.stde_s_pw = make_conv<T>(spec_stde_s_pw(c));
  p.stde_s_dw = make_conv<T>(spec_stde_s_dw(c));
  for (int i = 0; i < 4; ++i) p.mste_branch[i] = make_conv<T>(spec_mste_branch(c, i));
  p.mste_bn.affine.gamma.assign(c.d_depth, T(0));
  p.mste_bn.affine.beta.assign(c.d_depth, T(0));
  p.mste_bn.running_mean.assign(c.d_depth, T(0));
  p.mste_bn.running_var.assign(c.d_depth, T(1));
  p.mste_skip = make_conv<T>(spec_mste_skip(c));
  const int cg = c.d_depth / c.groups;
  p.cna_gn_t.gamma.assign(cg, T(0));
  p.cna_gn_t.beta.assign(cg, T(0));
  p.cna_gn_s.gamma.assign(cg, T(0));
  p.cna_gn_s.beta.assign(cg, T(0));
  p.cna_fuse = make_conv<T>(spec_cna_fuse(c));
  p.classifier.weight = Tensor4T<T>({c.num_classes, 1, 1, c.d_depth}, T(0));
  p.classifier.bias.assign(static_cast<std::size_t>(c.num_classes), T(0));
  return p;
}

template <class T>
void fill_uniform(Tensor4T<T>& w, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
}

double conv_fan_in(const ConvSpec& s) {
  return static_cast<double>(s.in_depth / s.groups) * s.kh * s.kw;
}

}  // namespace

template <class T>
ListenNetParamsT<T> zero_params(const ModelConfig& config) {
  config.validate();
  return make_params_structure<T>(config);
}

template <class T>
ListenNetParamsT<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ListenNetParamsT<T> p = make_params_structure<T>(config);
  std::mt19937_64 rng(seed);
  auto init_conv = [&](ConvParams<T>& cp, const ConvSpec& s) {
    fill_uniform(cp.weight, std::sqrt(6.0 / conv_fan_in(s)), rng);
  };
  init_conv(p.stde_t_pw, spec_stde_t_pw(config));
  init_conv(p.stde_t_dw, spec_stde_t_dw(config));
  init_conv(p.stde_s_pw, spec_stde_s_pw(config));
  init_conv(p.stde_s_dw, spec_stde_s_dw(config));
  for (int i = 0; i < 4; ++i) init_conv(p.mste_branch[i], spec_mste_branch(config, i));
  init_conv(p.mste_skip, spec_mste_skip(config));
  init_conv(p.cna_fuse, spec_cna_fuse(config));
  fill_uniform(p.classifier.weight, std::sqrt(6.0 / config.d_depth), rng);
  // Norm affines: identity transform at init.
  std::fill(p.mste_bn.affine.gamma.begin(), p.mste_bn.affine.gamma.end(), T(1));
  std::fill(p.cna_gn_t.gamma.begin(), p.cna_gn_t.gamma.end(), T(1));
  std::fill(p.cna_gn_s.gamma.begin(), p.cna_gn_s.gamma.end(), T(1));
  return p;
}

ListenNetParamsT<double> widen_params(const ListenNetParams& p) {
  ListenNetParamsT<double> out;
  auto convert_conv = [](const ConvParams<float>& c) {
    ConvParams<double> r;
    r.weight = widen(c.weight);
    r.bias.assign(c.bias.begin(), c.bias.end());
    return r;
  };
  out.stde_t_pw = convert_conv(p.stde_t_pw);
  out.stde_t_dw = convert_conv(p.stde_t_dw);
  out.stde_s_pw = convert_conv(p.stde_s_pw);
  out.stde_s_dw = convert_conv(p.stde_s_dw);
  for (int i = 0; i < 4; ++i) out.mste_branch[i] = convert_conv(p.mste_branch[i]);
  out.mste_bn.affine.gamma.assign(p.mste_bn.affine.gamma.begin(), p.mste_bn.affine.gamma.end());
  out.mste_bn.affine.beta.assign(p.mste_bn.affine.beta.begin(), p.mste_bn.affine.beta.end());
  out.mste_bn.running_mean.assign(p.mste_bn.running_mean.begin(), p.mste_bn.running_mean.end());
  out.mste_bn.running_var.assign(p.mste_bn.running_var.begin(), p.mste_bn.running_var.end());
  out.mste_skip = convert_conv(p.mste_skip);
  out.cna_gn_t.gamma.assign(p.cna_gn_t.gamma.begin(), p.cna_gn_t.gamma.end());
  out.cna_gn_t.beta.assign(p.cna_gn_t.beta.begin(), p.cna_gn_t.beta.end());
  out.cna_gn_s.gamma.assign(p.cna_gn_s.gamma.begin(), p.cna_gn_s.gamma.end());
  out.cna_gn_s.beta.assign(p.cna_gn_s.beta.begin(), p.cna_gn_s.beta.end());
  out.cna_fuse = convert_conv(p.cna_fuse);
  out.classifier.weight = widen(p.classifier.weight);
  out.classifier.bias.assign(p.classifier.bias.begin(), p.classifier.bias.end());
  return out;
}

ListenNetParams narrow_params(const ListenNetParamsT<double>& p) {
  ListenNetParams out;
  auto convert_conv = [](const ConvParams<double>& c) {
    ConvParams<float> r;
    r.weight = narrow(c.weight);
    r.bias.assign(c.bias.begin(), c.bias.end());
    return r;
  };
  out.stde_t_pw = convert_conv(p.stde_t_pw);
  out.stde_t_dw = convert_conv(p.stde_t_dw);
  out.stde_s_pw = convert_conv(p.stde_s_pw);
  out.stde_s_dw = convert_conv(p.stde_s_dw);
  for (int i = 0; i < 4; ++i) out.mste_branch[i] = convert_conv(p.mste_branch[i]);
  out.mste_bn.affine.gamma.assign(p.mste_bn.affine.gamma.begin(), p.mste_bn.affine.gamma.end());
  out.mste_bn.affine.beta.assign(p.mste_bn.affine.beta.begin(), p.mste_bn.affine.beta.end());
  out.mste_bn.running_mean.assign(p.mste_bn.running_mean.begin(), p.mste_bn.running_mean.end());
  out.mste_bn.running_var.assign(p.mste_bn.running_var.begin(), p.mste_bn.running_var.end());
  out.mste_skip = convert_conv(p.mste_skip);
  out.cna_gn_t.gamma.assign(p.cna_gn_t.gamma.begin(), p.cna_gn_t.gamma.end());
  out.cna_gn_t.beta.assign(p.cna_gn_t.beta.begin(), p.cna_gn_t.beta.end());
  out.cna_gn_s.gamma.assign(p.cna_gn_s.gamma.begin(), p.cna_gn_s.gamma.end());
  out.cna_gn_s.beta.assign(p.cna_gn_s.beta.begin(), p.cna_gn_s.beta.end());
  out.cna_fuse = convert_conv(p.cna_fuse);
  out.classifier.weight = narrow(p.classifier.weight);
  out.classifier.bias.assign(p.classifier.bias.begin(), p.classifier.bias.end());
  return out;
}

// ---- STDE -------------------------------------------------------------------

template <class T>
StdeOut<T> stde_forward(const Tensor4T<T>& x, const ListenNetParamsT<T>& params,
                        const ModelConfig& config) {
  if (x.depth() != 1 || x.height() != config.channels || x.width() != config.window_len)
    throw ShapeError("stde input must be (B,1,C,T) matching the model config");
  StdeOut<T> out;
  auto [z1, c1] = conv2d_forward(x, spec_stde_t_pw(config), params.stde_t_pw);
  auto [z2, c2] = conv2d_forward(z1, spec_stde_t_dw(config), params.stde_t_dw);
  auto [e_t, a1] = gelu_forward(z2);
  auto [z3, c3] = conv2d_forward(e_t, spec_stde_s_pw(config), params.stde_s_pw);
  auto [z4, c4] = conv2d_forward(z3, spec_stde_s_dw(config), params.stde_s_dw);
  auto [e_s, a2] = gelu_forward(z4);
  out.e_t = std::move(e_t);
  out.e_s = std::move(e_s);
  out.cache = StdeCache<T>{std::move(c1), std::move(c2), std::move(c3), std::move(c4),
                           std::move(a1), std::move(a2)};
  return out;
}

// ---- MSTE -------------------------------------------------------------------

namespace {

template <class T>
std::vector<Tensor4T<T>> split_depth(const Tensor4T<T>& x, int parts) {
  const int dpp = x.depth() / parts;
  std::vector<Tensor4T<T>> out;
  out.reserve(static_cast<std::size_t>(parts));
  const std::size_t plane = static_cast<std::size_t>(x.height()) * x.width();
  for (int pi = 0; pi < parts; ++pi) {
    Tensor4T<T> part({x.batch(), dpp, x.height(), x.width()});
    for (int b = 0; b < x.batch(); ++b)
      std::copy_n(x.data() + x.offset(b, pi * dpp, 0, 0), static_cast<std::size_t>(dpp) * plane,
                  part.data() + part.offset(b, 0, 0, 0));
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace

template <class T>
MsteOut<T> mste_forward(const Tensor4T<T>& e_t, const Tensor4T<T>& e_s,
                        ListenNetParamsT<T>& params, const ModelConfig& config, bool training) {
  MsteOut<T> out;
  if (!config.use_mste) {
    out.e_s_prime = e_s;
    out.cache.enabled = false;
    return out;
  }
  const int t_min = config.t_min();
  if (t_min < 1) throw ShapeError("mste: T' too short for the largest dilated kernel");
  out.cache.enabled = true;
  out.cache.t_min = t_min;
  out.cache.t_prime = config.t_prime();

  std::vector<Tensor4T<T>> truncated;
  truncated.reserve(4);
  for (int i = 0; i < 4; ++i) {
    auto [br, bc] = conv2d_forward(e_t, spec_mste_branch(config, i), params.mste_branch[i]);
    out.cache.branch_w[static_cast<std::size_t>(i)] = br.width();
    truncated.push_back(slice_time_last(br, t_min));
    out.cache.branch[static_cast<std::size_t>(i)] = std::move(bc);
  }
  std::vector<const Tensor4T<T>*> parts;
  for (const auto& t : truncated) parts.push_back(&t);
  Tensor4T<T> cat = concat_depth(parts);
  auto [u, bnc] = batchnorm_forward(cat, params.mste_bn, training, T(0.1), T(1e-5));
  out.cache.bn = std::move(bnc);
  auto [sk, skc] = conv2d_forward(u, spec_mste_skip(config), params.mste_skip);
  out.cache.skip = std::move(skc);
  out.s = linear_resize_time(sk, config.t_prime());
  out.e_s_prime = e_s;
  add_inplace(out.e_s_prime, out.s);
  out.u = std::move(u);
  return out;
}

// ---- depth alignment ----------------------------------------------------------

template <class T>
Tensor4T<T> depth_align(const Tensor4T<T>& e_t, int d_depth) {
  if (e_t.height() < d_depth)
    throw ShapeError("depth_align: channel count " + std::to_string(e_t.height()) +
                     " below d_depth " + std::to_string(d_depth));
  return adaptive_avg_pool(e_t, d_depth, e_t.width());
}

// ---- CNA --------------------------------------------------------------------

namespace {

template <class T>
std::pair<Tensor4T<T>, GateCache<T>> gate_forward(const Tensor4T<T>& x,
                                                  const AffineParams<T>& affine, int num_groups) {
  GateCache<T> cache;
  cache.x = x;
  cache.gs = sigmoid(adaptive_avg_pool(x, x.height(), 1));
  cache.gt = sigmoid(adaptive_avg_pool(x, 1, x.width()));
  Tensor4T<T> p(x.shape());
  for (int n = 0; n < x.batch(); ++n)
    for (int i = 0; i < x.depth(); ++i)
      for (int h = 0; h < x.height(); ++h) {
        const T gsv = cache.gs.at(n, i, h, 0);
        const T* xr = x.data() + x.offset(n, i, h, 0);
        const T* gtr = cache.gt.data() + cache.gt.offset(n, i, 0, 0);
        T* pr = p.data() + p.offset(n, i, h, 0);
        for (int j = 0; j < x.width(); ++j) pr[j] = xr[j] * gsv * gtr[j];
      }
  auto [y, gn] = groupnorm_forward(p, affine, num_groups, T(1e-5));
  cache.gn = std::move(gn);
  return {std::move(y), std::move(cache)};
}

// Gradient of gate_forward; the input appears in the product and inside both
// sigmoid gates, so three paths accumulate.
template <class T>
struct GateGrads {
  Tensor4T<T> x;
  std::vector<T> gamma, beta;
};

template <class T>
GateGrads<T> gate_backward(const GateCache<T>& cache, const Tensor4T<T>& grad_y) {
  NormGrads<T> gn = groupnorm_backward(cache.gn, grad_y);
  const Tensor4T<T>& x = cache.x;
  const int hn = x.height(), wn = x.width();
  GateGrads<T> out{Tensor4T<T>(x.shape(), T(0)), std::move(gn.gamma), std::move(gn.beta)};
  Tensor4T<T> grad_spool({x.batch(), x.depth(), hn, 1}, T(0));
  Tensor4T<T> grad_tpool({x.batch(), x.depth(), 1, wn}, T(0));
  for (int n = 0; n < x.batch(); ++n)
    for (int i = 0; i < x.depth(); ++i) {
      for (int h = 0; h < hn; ++h) {
        const T gsv = cache.gs.at(n, i, h, 0);
        const T* gp = gn.x.data() + gn.x.offset(n, i, h, 0);
        const T* xr = x.data() + x.offset(n, i, h, 0);
        const T* gtr = cache.gt.data() + cache.gt.offset(n, i, 0, 0);
        T* gx = out.x.data() + out.x.offset(n, i, h, 0);
        T acc_s = T(0);
        for (int j = 0; j < wn; ++j) {
          gx[j] += gp[j] * gsv * gtr[j];
          acc_s += gp[j] * xr[j] * gtr[j];
          grad_tpool.at(n, i, 0, j) += gp[j] * xr[j] * gsv;
        }
        const T sig_d = gsv * (T(1) - gsv);
        grad_spool.at(n, i, h, 0) = acc_s * sig_d;
      }
      for (int j = 0; j < wn; ++j) {
        const T gtv = cache.gt.at(n, i, 0, j);
        grad_tpool.at(n, i, 0, j) *= gtv * (T(1) - gtv);
      }
      // Adjoints of the two average pools.
      for (int h = 0; h < hn; ++h) {
        const T gsh = grad_spool.at(n, i, h, 0) / static_cast<T>(wn);
        T* gx = out.x.data() + out.x.offset(n, i, h, 0);
        for (int j = 0; j < wn; ++j) gx[j] += gsh + grad_tpool.at(n, i, 0, j) / static_cast<T>(hn);
      }
    }
  return out;
}

// Global average pool over (height, width) -> (B,1,1,depth).
template <class T>
Tensor4T<T> gap_hw(const Tensor4T<T>& x) {
  Tensor4T<T> out({x.batch(), 1, 1, x.depth()});
  const std::size_t plane = static_cast<std::size_t>(x.height()) * x.width();
  for (int b = 0; b < x.batch(); ++b)
    for (int d = 0; d < x.depth(); ++d)
      out.at(b, 0, 0, d) = static_cast<T>(
          kernels::sum(x.data() + x.offset(b, d, 0, 0), plane) / static_cast<T>(plane));
  return out;
}

}  // namespace

template <class T>
CnaOut<T> cna_forward(const Tensor4T<T>& e_t_aligned, const Tensor4T<T>& e_s_prime,
                      const ListenNetParamsT<T>& params, const ModelConfig& config) {
  CnaOut<T> out;
  if (!config.use_cna) {
    out.e = e_s_prime;
    out.cache.enabled = false;
    return out;
  }
  const int d = config.d_depth, g = config.groups, c = d / g;
  const int b = e_s_prime.batch(), tp = e_s_prime.width();
  if (e_t_aligned.shape() != Shape4{b, d, d, tp})
    throw ShapeError("cna: depth-aligned temporal branch has unexpected shape");
  if (e_s_prime.depth() != d || e_s_prime.height() != 1)
    throw ShapeError("cna: spatial branch must be (B,d_depth,1,T')");

  CnaCache<T>& cache = out.cache;
  cache.enabled = true;
  cache.g = g;
  cache.c = c;
  cache.et_shape = e_t_aligned.shape();
  cache.es_shape = e_s_prime.shape();
  const int n = b * g;

  Tensor4T<T> f_t = e_t_aligned.reshaped({n, c, d, tp});
  cache.f_s = e_s_prime.reshaped({n, c, 1, tp});

  auto [f1, gct] = gate_forward(f_t, params.cna_gn_t, c);
  auto [f2, gcs] = gate_forward(cache.f_s, params.cna_gn_s, c);
  cache.gate_t = std::move(gct);
  cache.gate_s = std::move(gcs);

  cache.a1 = softmax_axis(gap_hw(f1), Axis::Width);
  cache.a2 = softmax_axis(gap_hw(f2), Axis::Width);

  Tensor4T<T> m1 = matmul_batched(cache.a1.reshaped({n, 1, 1, c}), f2.reshaped({n, 1, c, tp}));
  Tensor4T<T> m2 =
      matmul_batched(cache.a2.reshaped({n, 1, 1, c}), f1.reshaped({n, 1, c, d * tp}));
  cache.f1 = std::move(f1);
  cache.f2 = std::move(f2);

  Tensor4T<T> m1r = m1.reshaped({n, 1, 1, tp});
  Tensor4T<T> m2r = m2.reshaped({n, d, 1, tp});
  Tensor4T<T> z = concat_depth<T>({&m1r, &m2r});
  auto [wmap, fc] = conv2d_forward(z, spec_cna_fuse(config), params.cna_fuse);
  cache.fuse = std::move(fc);
  cache.sig_w = sigmoid(wmap);

  Tensor4T<T> gated(cache.f_s.shape());
  for (int ni = 0; ni < n; ++ni)
    for (int i = 0; i < c; ++i) {
      const T* fs = cache.f_s.data() + cache.f_s.offset(ni, i, 0, 0);
      const T* sw = cache.sig_w.data() + cache.sig_w.offset(ni, 0, 0, 0);
      T* gp = gated.data() + gated.offset(ni, i, 0, 0);
      for (int j = 0; j < tp; ++j) gp[j] = fs[j] * sw[j];
    }
  out.e = gated.reshaped({b, d, 1, tp});
  return out;
}

namespace {

template <class T>
struct CnaGrads {
  Tensor4T<T> e_t_aligned, e_s_prime;
  GateGrads<T> gate_t, gate_s;
  ConvGrads<T> fuse;
};

template <class T>
CnaGrads<T> cna_backward(const CnaCache<T>& cache, const Tensor4T<T>& grad_e) {
  CnaGrads<T> out;
  if (!cache.enabled) {
    out.e_s_prime = grad_e;
    return out;
  }
  const int n = cache.f_s.batch(), c = cache.c, tp = cache.f_s.width();
  const int d = cache.et_shape[1];
  Tensor4T<T> grad_gated = grad_e.reshaped({n, c, 1, tp});

  // E = F_s * sigmoid(W): direct product rule.
  Tensor4T<T> grad_fs(cache.f_s.shape(), T(0));
  Tensor4T<T> grad_wmap({n, 1, 1, tp}, T(0));
  for (int ni = 0; ni < n; ++ni) {
    T* gw = grad_wmap.data() + grad_wmap.offset(ni, 0, 0, 0);
    const T* sw = cache.sig_w.data() + cache.sig_w.offset(ni, 0, 0, 0);
    for (int i = 0; i < c; ++i) {
      const T* gg = grad_gated.data() + grad_gated.offset(ni, i, 0, 0);
      const T* fs = cache.f_s.data() + cache.f_s.offset(ni, i, 0, 0);
      T* gf = grad_fs.data() + grad_fs.offset(ni, i, 0, 0);
      for (int j = 0; j < tp; ++j) {
        gf[j] += gg[j] * sw[j];
        gw[j] += gg[j] * fs[j];
      }
    }
    for (int j = 0; j < tp; ++j) gw[j] *= sw[j] * (T(1) - sw[j]);
  }

  out.fuse = conv2d_backward(cache.fuse, grad_wmap);

  // Split the fused gradient back into the two attention maps.
  Tensor4T<T> grad_m1({n, 1, 1, tp});
  Tensor4T<T> grad_m2({n, d, 1, tp});
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(out.fuse.x.data() + out.fuse.x.offset(ni, 0, 0, 0), tp,
                grad_m1.data() + grad_m1.offset(ni, 0, 0, 0));
    std::copy_n(out.fuse.x.data() + out.fuse.x.offset(ni, 1, 0, 0),
                static_cast<std::size_t>(d) * tp, grad_m2.data() + grad_m2.offset(ni, 0, 0, 0));
  }

  // M1 = a1 x F_2, M2 = a2 x F_1 (per-group row-vector times matrix).
  Tensor4T<T> grad_a1({n, 1, 1, c}, T(0));
  Tensor4T<T> grad_a2({n, 1, 1, c}, T(0));
  Tensor4T<T> grad_f1(cache.f1.shape(), T(0));
  Tensor4T<T> grad_f2(cache.f2.shape(), T(0));
  for (int ni = 0; ni < n; ++ni) {
    const T* gm1 = grad_m1.data() + grad_m1.offset(ni, 0, 0, 0);
    for (int i = 0; i < c; ++i) {
      const T* f2r = cache.f2.data() + cache.f2.offset(ni, i, 0, 0);
      grad_a1.at(ni, 0, 0, i) += kernels::dot(gm1, f2r, static_cast<std::size_t>(tp));
      kernels::axpy(cache.a1.at(ni, 0, 0, i), gm1,
                    grad_f2.data() + grad_f2.offset(ni, i, 0, 0), static_cast<std::size_t>(tp));
    }
    const T* gm2 = grad_m2.data() + grad_m2.offset(ni, 0, 0, 0);
    for (int i = 0; i < c; ++i) {
      const T* f1r = cache.f1.data() + cache.f1.offset(ni, i, 0, 0);
      grad_a2.at(ni, 0, 0, i) +=
          kernels::dot(gm2, f1r, static_cast<std::size_t>(d) * tp);
      kernels::axpy(cache.a2.at(ni, 0, 0, i), gm2,
                    grad_f1.data() + grad_f1.offset(ni, i, 0, 0),
                    static_cast<std::size_t>(d) * tp);
    }
  }

  // Softmax of the pooled vectors, then the global-average-pool adjoint.
  auto softmax_gap_back = [&](const Tensor4T<T>& a, const Tensor4T<T>& grad_a, Tensor4T<T>& grad_f,
                              std::size_t plane) {
    for (int ni = 0; ni < n; ++ni) {
      T dotv = T(0);
      for (int i = 0; i < c; ++i) dotv += grad_a.at(ni, 0, 0, i) * a.at(ni, 0, 0, i);
      for (int i = 0; i < c; ++i) {
        const T gp = a.at(ni, 0, 0, i) * (grad_a.at(ni, 0, 0, i) - dotv);
        const T spread = gp / static_cast<T>(plane);
        T* gf = grad_f.data() + grad_f.offset(ni, i, 0, 0);
        for (std::size_t e = 0; e < plane; ++e) gf[e] += spread;
      }
    }
  };
  softmax_gap_back(cache.a1, grad_a1, grad_f1, static_cast<std::size_t>(d) * tp);
  softmax_gap_back(cache.a2, grad_a2, grad_f2, static_cast<std::size_t>(tp));

  out.gate_t = gate_backward(cache.gate_t, grad_f1);
  out.gate_s = gate_backward(cache.gate_s, grad_f2);
  add_inplace(grad_fs, out.gate_s.x);

  out.e_t_aligned = out.gate_t.x.reshaped(cache.et_shape);
  out.e_s_prime = grad_fs.reshaped(cache.es_shape);
  return out;
}

}  // namespace

// ---- classifier ----------------------------------------------------------------

template <class T>
ClassifyOut<T> classify(const Tensor4T<T>& e, const ListenNetParamsT<T>& params) {
  ClassifyOut<T> out;
  out.cache.e_shape = e.shape();
  Tensor4T<T> pooled = gap_hw(e);
  auto [logits, lc] = linear_forward(pooled, params.classifier);
  auto [probs, sc] = softmax_forward(logits, Axis::Width);
  out.cache.linear = std::move(lc);
  out.cache.softmax = std::move(sc);
  out.probs = std::move(probs);
  return out;
}

// ---- full model -----------------------------------------------------------------

template <class T>
ModelOut<T> model_forward(const Tensor4T<T>& batch, ListenNetParamsT<T>& params,
                          const ModelConfig& config, bool training) {
  config.validate();
  ModelOut<T> out;
  ModelCacheT<T>& cache = out.cache;
  cache.config = config;
  cache.training = training;

  StdeOut<T> stde = stde_forward(batch, params, config);
  assert(stde.e_t.shape() ==
         (Shape4{batch.batch(), config.d_depth, config.channels, config.t_prime()}));
  assert(stde.e_s.shape() == (Shape4{batch.batch(), config.d_depth, 1, config.t_prime()}));

  MsteOut<T> mste = mste_forward(stde.e_t, stde.e_s, params, config, training);
  assert(mste.e_s_prime.shape() == stde.e_s.shape());

  CnaOut<T> cna;
  if (config.use_cna) {
    Tensor4T<T> aligned = depth_align(stde.e_t, config.d_depth);
    assert(aligned.shape() ==
           (Shape4{batch.batch(), config.d_depth, config.d_depth, config.t_prime()}));
    cache.et_full_shape = stde.e_t.shape();
    cna = cna_forward(aligned, mste.e_s_prime, params, config);
    cache.e_t_aligned = std::move(aligned);
  } else {
    cna = cna_forward(stde.e_t, mste.e_s_prime, params, config);
  }

  ClassifyOut<T> cls = classify(cna.e, params);

  cache.stde = std::move(stde.cache);
  cache.mste = std::move(mste.cache);
  cache.cna = std::move(cna.cache);
  cache.cls = std::move(cls.cache);
  cache.e_t = std::move(stde.e_t);
  cache.e_s = std::move(stde.e_s);
  cache.u = std::move(mste.u);
  cache.s = std::move(mste.s);
  cache.e_s_prime = std::move(mste.e_s_prime);
  cache.e = std::move(cna.e);
  out.probs = std::move(cls.probs);
  return out;
}

template <class T>
ParamGradsT<T> model_backward(ModelCacheT<T>& cache, const Tensor4T<T>& grad_probs) {
  if (cache.consumed) throw UsageError("model cache already consumed by a backward pass");
  cache.consumed = true;
  const ModelConfig& config = cache.config;
  ParamGradsT<T> grads = zero_params<T>(config);

  // Classifier.
  Tensor4T<T> grad_logits = softmax_backward(cache.cls.softmax, grad_probs);
  LinearGrads<T> lg = linear_backward(cache.cls.linear, grad_logits);
  grads.classifier.weight = std::move(lg.weight);
  grads.classifier.bias = std::move(lg.bias);
  const Shape4 es = cache.cls.e_shape;
  Tensor4T<T> grad_e(es, T(0));
  {
    const std::size_t plane = static_cast<std::size_t>(es[2]) * es[3];
    for (int b = 0; b < es[0]; ++b)
      for (int d = 0; d < es[1]; ++d) {
        const T spread = lg.x.at(b, 0, 0, d) / static_cast<T>(plane);
        T* gp = grad_e.data() + grad_e.offset(b, d, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) gp[i] = spread;
      }
  }

  // CNA.
  CnaGrads<T> cg = cna_backward(cache.cna, grad_e);
  Tensor4T<T> grad_e_t(cache.e_t.shape(), T(0));
  if (cache.cna.enabled) {
    grads.cna_gn_t.gamma = std::move(cg.gate_t.gamma);
    grads.cna_gn_t.beta = std::move(cg.gate_t.beta);
    grads.cna_gn_s.gamma = std::move(cg.gate_s.gamma);
    grads.cna_gn_s.beta = std::move(cg.gate_s.beta);
    grads.cna_fuse.weight = std::move(cg.fuse.weight);
    grads.cna_fuse.bias = std::move(cg.fuse.bias);
    grad_e_t = adaptive_avg_pool_backward(cg.e_t_aligned, cache.et_full_shape);
  }
  Tensor4T<T> grad_e_s_prime = std::move(cg.e_s_prime);

  // MSTE.
  Tensor4T<T> grad_e_s = grad_e_s_prime;
  if (cache.mste.enabled) {
    Tensor4T<T> grad_sk = linear_resize_time_backward(grad_e_s_prime, cache.mste.t_min);
    ConvGrads<T> skg = conv2d_backward(cache.mste.skip, grad_sk);
    grads.mste_skip.weight = std::move(skg.weight);
    grads.mste_skip.bias = std::move(skg.bias);
    NormGrads<T> bng = batchnorm_backward(cache.mste.bn, skg.x);
    grads.mste_bn.affine.gamma = std::move(bng.gamma);
    grads.mste_bn.affine.beta = std::move(bng.beta);
    std::vector<Tensor4T<T>> parts = split_depth(bng.x, 4);
    for (int i = 0; i < 4; ++i) {
      Tensor4T<T> padded = slice_time_last_backward(
          parts[static_cast<std::size_t>(i)], cache.mste.branch_w[static_cast<std::size_t>(i)]);
      ConvGrads<T> bg = conv2d_backward(cache.mste.branch[static_cast<std::size_t>(i)], padded);
      grads.mste_branch[static_cast<std::size_t>(i)].weight = std::move(bg.weight);
      grads.mste_branch[static_cast<std::size_t>(i)].bias = std::move(bg.bias);
      add_inplace(grad_e_t, bg.x);
    }
  }

  // STDE, spatial path first.
  Tensor4T<T> g = gelu_backward(cache.stde.act_s, grad_e_s);
  ConvGrads<T> dsg = conv2d_backward(cache.stde.dw_s, g);
  grads.stde_s_dw.weight = std::move(dsg.weight);
  grads.stde_s_dw.bias = std::move(dsg.bias);
  ConvGrads<T> psg = conv2d_backward(cache.stde.pw_s, dsg.x);
  grads.stde_s_pw.weight = std::move(psg.weight);
  grads.stde_s_pw.bias = std::move(psg.bias);
  add_inplace(grad_e_t, psg.x);

  g = gelu_backward(cache.stde.act_t, grad_e_t);
  ConvGrads<T> dtg = conv2d_backward(cache.stde.dw_t, g);
  grads.stde_t_dw.weight = std::move(dtg.weight);
  grads.stde_t_dw.bias = std::move(dtg.bias);
  ConvGrads<T> ptg = conv2d_backward(cache.stde.pw_t, dtg.x);
  grads.stde_t_pw.weight = std::move(ptg.weight);
  grads.stde_t_pw.bias = std::move(ptg.bias);
  return grads;
}

// ---- accounting ------------------------------------------------------------------

long long count_params(const ModelConfig& config) {
  config.validate();
  long long total = 0;
  total += conv_param_count(spec_stde_t_pw(config));
  total += conv_param_count(spec_stde_t_dw(config));
  total += conv_param_count(spec_stde_s_pw(config));
  total += conv_param_count(spec_stde_s_dw(config));
  for (int i = 0; i < 4; ++i) total += conv_param_count(spec_mste_branch(config, i));
  total += 2LL * config.d_depth;  // batch-norm affine
  total += conv_param_count(spec_mste_skip(config));
  total += 4LL * (config.d_depth / config.groups);  // two group-norm affines
  total += conv_param_count(spec_cna_fuse(config));
  total += static_cast<long long>(config.num_classes) * config.d_depth + config.num_classes;
  return total;
}

long long count_macs(const ModelConfig& config) {
  config.validate();
  const int c = config.channels, t = config.window_len, tp = config.t_prime();
  long long total = 0;
  total += conv_mac_count(spec_stde_t_pw(config), c, t);
  total += conv_mac_count(spec_stde_t_dw(config), c, t);
  total += conv_mac_count(spec_stde_s_pw(config), c, tp);
  total += conv_mac_count(spec_stde_s_dw(config), c, tp);
  if (config.use_mste) {
    for (int i = 0; i < 4; ++i) total += conv_mac_count(spec_mste_branch(config, i), c, tp);
    total += conv_mac_count(spec_mste_skip(config), c, config.t_min());
  }
  if (config.use_cna) {
    const int g = config.groups, cg = config.d_depth / g;
    total += static_cast<long long>(g) * conv_mac_count(spec_cna_fuse(config), 1, tp);
    total += static_cast<long long>(g) * cg * tp;                    // M1 product
    total += static_cast<long long>(g) * cg * config.d_depth * tp;   // M2 product
  }
  total += static_cast<long long>(config.d_depth) * config.num_classes;
  return total;
}

// ---- explicit instantiations -------------------------------------------------------

#define LISTENNET_INSTANTIATE_MODEL(T)                                                          \
  template struct ListenNetParamsT<T>;                                                          \
  template ListenNetParamsT<T> zero_params<T>(const ModelConfig&);                              \
  template ListenNetParamsT<T> init_params<T>(const ModelConfig&, std::uint64_t);               \
  template StdeOut<T> stde_forward<T>(const Tensor4T<T>&, const ListenNetParamsT<T>&,           \
                                      const ModelConfig&);                                      \
  template MsteOut<T> mste_forward<T>(const Tensor4T<T>&, const Tensor4T<T>&,                   \
                                      ListenNetParamsT<T>&, const ModelConfig&, bool);          \
  template Tensor4T<T> depth_align<T>(const Tensor4T<T>&, int);                                 \
  template CnaOut<T> cna_forward<T>(const Tensor4T<T>&, const Tensor4T<T>&,                     \
                                    const ListenNetParamsT<T>&, const ModelConfig&);            \
  template ClassifyOut<T> classify<T>(const Tensor4T<T>&, const ListenNetParamsT<T>&);          \
  template ModelOut<T> model_forward<T>(const Tensor4T<T>&, ListenNetParamsT<T>&,               \
                                        const ModelConfig&, bool);                              \
  template ParamGradsT<T> model_backward<T>(ModelCacheT<T>&, const Tensor4T<T>&);

LISTENNET_INSTANTIATE_MODEL(float)
LISTENNET_INSTANTIATE_MODEL(double)

#undef LISTENNET_INSTANTIATE_MODEL

}  // namespace listennet
