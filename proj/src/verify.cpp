#include "listennet/verify.hpp"

#include <cmath>
#include <cstdio>

#include "listennet/model.hpp"

namespace listennet {

Tensor4d naive_conv(const Tensor4d& x, const ConvSpec& spec, const ConvParams<double>& params) {
  if (x.depth() != spec.in_depth) throw ShapeError("naive_conv input depth mismatch");
  spec.validate(x.height(), x.width());
  const int cpg = spec.in_depth / spec.groups;
  const int opg = spec.out_depth / spec.groups;
  const int ho = spec.out_h(x.height());
  const int wo = spec.out_w(x.width());
  Tensor4d out({x.batch(), spec.out_depth, ho, wo}, 0.0);
  for (int b = 0; b < x.batch(); ++b)
    for (int o = 0; o < spec.out_depth; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = spec.bias ? params.bias[static_cast<std::size_t>(o)] : 0.0;
          const int base_c = (o / opg) * cpg;
          for (int c = 0; c < cpg; ++c)
            for (int u = 0; u < spec.kh; ++u)
              for (int v = 0; v < spec.kw; ++v)
                acc += params.weight.at(o, c, u, v) *
                       x.at(b, base_c + c, i + u * spec.dh, j + v * spec.dw);
          out.at(b, o, i, j) = acc;
        }
  return out;
}

GradCheckReport finite_diff_check(const std::string& op, const std::function<double()>& eval,
                                  double* values, const double* analytic, std::size_t count,
                                  double eps, double gate, int sample_count, std::mt19937_64& rng) {
  GradCheckReport report;
  report.op = op;
  if (count == 0) {
    report.pass = true;
    return report;
  }
  std::vector<std::size_t> indices(count);
  for (std::size_t i = 0; i < count; ++i) indices[i] = i;
  if (static_cast<std::size_t>(sample_count) < count) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(sample_count); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, count - 1);
      std::swap(indices[i], indices[pick(rng)]);
    }
    indices.resize(static_cast<std::size_t>(sample_count));
  }
  for (std::size_t idx : indices) {
    const double saved = values[idx];
    values[idx] = saved + eps;
    const double f_plus = eval();
    values[idx] = saved - eps;
    const double f_minus = eval();
    values[idx] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      report.pass = false;
      report.max_rel_err = std::numeric_limits<double>::infinity();
      return report;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * eps);
    const double abs_err = std::abs(numeric - analytic[idx]);
    const double rel_err =
        abs_err / std::max({std::abs(numeric), std::abs(analytic[idx]), 1e-8});
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    report.max_rel_err = std::max(report.max_rel_err, rel_err);
    ++report.checked;
  }
  report.pass = report.max_rel_err <= gate;
  return report;
}

double check_alignment(const std::vector<DecisionWindow>& aligned_windows) {
  if (aligned_windows.empty()) return 0.0;
  const int c_count = aligned_windows.front().channels;
  std::vector<double> mean_cov(static_cast<std::size_t>(c_count) * c_count, 0.0);
  for (const auto& w : aligned_windows) {
    for (int r = 0; r < c_count; ++r)
      for (int c = 0; c < c_count; ++c) {
        double acc = 0.0;
        for (int t = 0; t < w.length; ++t)
          acc += static_cast<double>(w.at(r, t)) * w.at(c, t);
        mean_cov[static_cast<std::size_t>(r) * c_count + c] += acc / w.length;
      }
  }
  double frob = 0.0;
  const double inv_n = 1.0 / static_cast<double>(aligned_windows.size());
  for (int r = 0; r < c_count; ++r)
    for (int c = 0; c < c_count; ++c) {
      const double v = mean_cov[static_cast<std::size_t>(r) * c_count + c] * inv_n -
                       (r == c ? 1.0 : 0.0);
      frob += v * v;
    }
  return std::sqrt(frob);
}

namespace {

struct CheckTarget {
  double* values;
  const double* analytic;
  std::size_t count;
};

Tensor4d random_tensor(Shape4 shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4d t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

GradCheckReport check_many(const std::string& op, const std::function<double()>& eval,
                           const std::vector<CheckTarget>& targets, double eps, double gate,
                           int samples_per_target, std::mt19937_64& rng) {
  GradCheckReport merged;
  merged.op = op;
  merged.pass = true;
  for (const auto& t : targets) {
    GradCheckReport r =
        finite_diff_check(op, eval, t.values, t.analytic, t.count, eps, gate, samples_per_target, rng);
    merged.max_rel_err = std::max(merged.max_rel_err, r.max_rel_err);
    merged.max_abs_err = std::max(merged.max_abs_err, r.max_abs_err);
    merged.checked += r.checked;
    merged.pass = merged.pass && r.pass;
  }
  return merged;
}

double weighted_sum(const Tensor4d& out, const Tensor4d& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * weights.data()[i];
  return acc;
}

GradCheckReport check_conv(const std::string& name, const ConvSpec& spec, Shape4 in_shape,
                           std::mt19937_64& rng) {
  Tensor4d x = random_tensor(in_shape, rng);
  ConvParams<double> params;
  params.weight = random_tensor({spec.out_depth, spec.in_depth / spec.groups, spec.kh, spec.kw}, rng);
  if (spec.bias) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    params.bias.resize(static_cast<std::size_t>(spec.out_depth));
    for (auto& b : params.bias) b = dist(rng);
  }
  auto [out0, cache0] = conv2d_forward(x, spec, params);
  Tensor4d upstream = random_tensor(out0.shape(), rng);
  // Fresh cache per backward: the cache snapshots x and weight at call time.
  auto analytic = [&] {
    auto [out, c] = conv2d_forward(x, spec, params);
    return conv2d_backward(c, upstream);
  }();
  auto eval = [&] {
    auto [out, c] = conv2d_forward(x, spec, params);
    return weighted_sum(out, upstream);
  };
  std::vector<CheckTarget> targets = {
      {params.weight.data(), analytic.weight.data(), params.weight.size()},
      {x.data(), analytic.x.data(), x.size()},
  };
  if (spec.bias) targets.push_back({params.bias.data(), analytic.bias.data(), params.bias.size()});
  return check_many(name, eval, targets, 1e-4, 1e-4, 25, rng);
}

GradCheckReport check_batchnorm(std::mt19937_64& rng) {
  Tensor4d x = random_tensor({3, 6, 4, 9}, rng);
  BatchNormParams<double> params;
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  params.affine.gamma.resize(6);
  params.affine.beta.resize(6);
  for (int i = 0; i < 6; ++i) {
    params.affine.gamma[static_cast<std::size_t>(i)] = dist(rng);
    params.affine.beta[static_cast<std::size_t>(i)] = dist(rng) - 1.0;
  }
  params.running_mean.assign(6, 0.0);
  params.running_var.assign(6, 1.0);
  auto [out0, cache0] = batchnorm_forward(x, params, true, 0.1, 1e-5);
  Tensor4d upstream = random_tensor(out0.shape(), rng);
  NormGrads<double> analytic = batchnorm_backward(cache0, upstream);
  auto eval = [&] {
    BatchNormParams<double> p = params;  // running stats must not drift between evals
    auto [out, c] = batchnorm_forward(x, p, true, 0.1, 1e-5);
    return weighted_sum(out, upstream);
  };
  std::vector<CheckTarget> targets = {
      {x.data(), analytic.x.data(), x.size()},
      {params.affine.gamma.data(), analytic.gamma.data(), 6},
      {params.affine.beta.data(), analytic.beta.data(), 6},
  };
  return check_many("batchnorm(train)", eval, targets, 1e-4, 1e-4, 45, rng);
}

GradCheckReport check_groupnorm(std::mt19937_64& rng) {
  Tensor4d x = random_tensor({2, 4, 6, 10}, rng);
  AffineParams<double> params;
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  params.gamma.resize(4);
  params.beta.resize(4);
  for (int i = 0; i < 4; ++i) {
    params.gamma[static_cast<std::size_t>(i)] = dist(rng);
    params.beta[static_cast<std::size_t>(i)] = dist(rng) - 1.0;
  }
  auto [out0, cache0] = groupnorm_forward(x, params, 2, 1e-5);
  Tensor4d upstream = random_tensor(out0.shape(), rng);
  NormGrads<double> analytic = groupnorm_backward(cache0, upstream);
  auto eval = [&] {
    auto [out, c] = groupnorm_forward(x, params, 2, 1e-5);
    return weighted_sum(out, upstream);
  };
  std::vector<CheckTarget> targets = {
      {x.data(), analytic.x.data(), x.size()},
      {params.gamma.data(), analytic.gamma.data(), 4},
      {params.beta.data(), analytic.beta.data(), 4},
  };
  return check_many("groupnorm", eval, targets, 1e-4, 1e-4, 45, rng);
}

GradCheckReport check_linear(std::mt19937_64& rng) {
  Tensor4d x = random_tensor({5, 1, 1, 16}, rng);
  LinearParams<double> params;
  params.weight = random_tensor({2, 1, 1, 16}, rng);
  params.bias = {0.3, -0.2};
  auto [out0, cache0] = linear_forward(x, params);
  Tensor4d upstream = random_tensor(out0.shape(), rng);
  LinearGrads<double> analytic = linear_backward(cache0, upstream);
  auto eval = [&] {
    auto [out, c] = linear_forward(x, params);
    return weighted_sum(out, upstream);
  };
  std::vector<CheckTarget> targets = {
      {params.weight.data(), analytic.weight.data(), params.weight.size()},
      {params.bias.data(), analytic.bias.data(), 2},
      {x.data(), analytic.x.data(), x.size()},
  };
  return check_many("linear", eval, targets, 1e-4, 1e-4, 25, rng);
}

GradCheckReport check_activation(const std::string& name, std::mt19937_64& rng) {
  Tensor4d x = random_tensor({2, 3, 4, 7}, rng, -2.0, 2.0);
  Tensor4d upstream = random_tensor(x.shape(), rng);
  Tensor4d analytic(x.shape());
  std::function<double()> eval;
  if (name == "gelu") {
    auto [y0, c0] = gelu_forward(x);
    analytic = gelu_backward(c0, upstream);
    eval = [&] {
      auto [y, c] = gelu_forward(x);
      return weighted_sum(y, upstream);
    };
  } else if (name == "sigmoid") {
    auto [y0, c0] = sigmoid_forward(x);
    analytic = sigmoid_backward(c0, upstream);
    eval = [&] {
      auto [y, c] = sigmoid_forward(x);
      return weighted_sum(y, upstream);
    };
  } else {
    auto [y0, c0] = softmax_forward(x, Axis::Width);
    analytic = softmax_backward(c0, upstream);
    eval = [&] {
      auto [y, c] = softmax_forward(x, Axis::Width);
      return weighted_sum(y, upstream);
    };
  }
  std::vector<CheckTarget> targets = {{x.data(), analytic.data(), x.size()}};
  return check_many(name, eval, targets, 1e-4, 1e-4, 60, rng);
}

GradCheckReport check_end_to_end(std::mt19937_64& rng) {
  ModelConfig config;
  config.channels = 8;
  config.window_len = 32;
  config.d_depth = 8;
  config.groups = 4;
  ListenNetParamsT<double> params = init_params<double>(config, 17);
  Tensor4d x = random_tensor({2, 1, config.channels, config.window_len}, rng);
  auto out0 = model_forward(x, params, config, true);
  Tensor4d upstream = random_tensor(out0.probs.shape(), rng);
  ParamGradsT<double> analytic = model_backward(out0.cache, upstream);
  auto eval = [&] {
    ListenNetParamsT<double> p = params;  // keep running stats fixed across evals
    auto out = model_forward(x, p, config, true);
    return weighted_sum(out.probs, upstream);
  };
  // Zip parameter and gradient spans; the traversal order is fixed.
  std::vector<CheckTarget> targets;
  std::vector<std::pair<double*, std::size_t>> pspans;
  std::vector<std::pair<const double*, std::size_t>> gspans;
  params.for_each_trainable(
      [&](const std::string&, double* p, std::size_t n) { pspans.push_back({p, n}); });
  analytic.for_each_trainable(
      [&](const std::string&, const double* g, std::size_t n) { gspans.push_back({g, n}); });
  for (std::size_t i = 0; i < pspans.size(); ++i)
    targets.push_back({pspans[i].first, gspans[i].first, pspans[i].second});
  return check_many("model(end-to-end)", eval, targets, 1e-4, 1e-3, 3, rng);
}

}  // namespace

std::vector<GradCheckReport> run_gradient_battery(std::uint64_t seed, bool verbose) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckReport> reports;
  reports.push_back(check_conv("conv(pointwise 1x1)", {1, 16, 1, 1, 1, 1, 1, true},
                               {2, 1, 16, 24}, rng));
  reports.push_back(check_conv("conv(depthwise 1x8)", {16, 16, 1, 8, 1, 1, 16, true},
                               {2, 16, 6, 24}, rng));
  reports.push_back(check_conv("conv(depthwise Cx1)", {16, 16, 12, 1, 1, 1, 16, true},
                               {2, 16, 12, 20}, rng));
  reports.push_back(check_conv("conv(dilated 1x5 d2)", {16, 4, 1, 5, 1, 2, 1, true},
                               {2, 16, 6, 24}, rng));
  reports.push_back(check_batchnorm(rng));
  reports.push_back(check_groupnorm(rng));
  reports.push_back(check_linear(rng));
  reports.push_back(check_activation("gelu", rng));
  reports.push_back(check_activation("sigmoid", rng));
  reports.push_back(check_activation("softmax", rng));
  reports.push_back(check_end_to_end(rng));
  if (verbose) {
    for (const auto& r : reports)
      std::printf("gradcheck %-22s checked=%-4d max_rel=%.3e max_abs=%.3e %s\n", r.op.c_str(),
                  r.checked, r.max_rel_err, r.max_abs_err, r.pass ? "PASS" : "FAIL");
  }
  return reports;
}

std::vector<DecisionWindow> make_correlated_scope(int channels, int window_count, int length,
                                                  std::mt19937_64& rng) {
  // Mixing matrix with a strong diagonal keeps the covariance well away from
  // both identity and singularity.
  std::uniform_real_distribution<double> mix_dist(-1.0, 1.0);
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> mix(static_cast<std::size_t>(channels) * channels);
  for (int r = 0; r < channels; ++r)
    for (int c = 0; c < channels; ++c)
      mix[static_cast<std::size_t>(r) * channels + c] = mix_dist(rng) + (r == c ? 2.0 : 0.0);
  std::vector<DecisionWindow> out;
  for (int w = 0; w < window_count; ++w) {
    DecisionWindow win;
    win.channels = channels;
    win.length = length;
    win.subject_id = "scope";
    win.label = (w % 2 == 0) ? Label::Left : Label::Right;
    win.data.resize(static_cast<std::size_t>(channels) * length);
    std::vector<double> z(static_cast<std::size_t>(channels));
    for (int t = 0; t < length; ++t) {
      for (auto& v : z) v = white(rng);
      for (int r = 0; r < channels; ++r) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c)
          acc += mix[static_cast<std::size_t>(r) * channels + c] * z[static_cast<std::size_t>(c)];
        win.data[static_cast<std::size_t>(r) * length + t] = static_cast<float>(acc);
      }
    }
    out.push_back(std::move(win));
  }
  return out;
}

double run_conv_oracle_battery(int spec_count, std::uint64_t seed, bool verbose) {
  std::mt19937_64 rng(seed);
  auto randint = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  double max_abs = 0.0;
  for (int s = 0; s < spec_count; ++s) {
    ConvSpec spec;
    int in_h = 0, in_w = 0;
    switch (s % 4) {
      case 0: {  // pointwise
        spec = {randint(1, 12), randint(1, 12), 1, 1, 1, 1, 1, true};
        in_h = randint(1, 10);
        in_w = randint(1, 16);
        break;
      }
      case 1: {  // depthwise temporal, kernels up to (1,8)
        const int d = randint(1, 16);
        spec = {d, d, 1, randint(2, 8), 1, randint(1, 2), d, true};
        in_h = randint(1, 8);
        in_w = (spec.kw - 1) * spec.dw + 1 + randint(0, 12);
        break;
      }
      case 2: {  // depthwise spatial, kernel heights up to 64
        const int d = randint(1, 8);
        const int kh = randint(2, 64);
        spec = {d, d, kh, 1, 1, 1, d, true};
        in_h = kh;
        in_w = randint(1, 12);
        break;
      }
      default: {  // dilated temporal family
        static const int kset[4] = {1, 2, 3, 5};
        const int k = kset[randint(0, 3)];
        spec = {randint(1, 12), randint(1, 8), 1, k, 1, randint(1, 2), 1, true};
        in_h = randint(1, 8);
        in_w = (spec.kw - 1) * spec.dw + 1 + randint(0, 12);
        break;
      }
    }
    Tensor4d x = random_tensor({randint(1, 3), spec.in_depth, in_h, in_w}, rng);
    ConvParams<double> params;
    params.weight =
        random_tensor({spec.out_depth, spec.in_depth / spec.groups, spec.kh, spec.kw}, rng);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    params.bias.resize(static_cast<std::size_t>(spec.out_depth));
    for (auto& b : params.bias) b = dist(rng);

    auto [fast, cache] = conv2d_forward(x, spec, params);
    Tensor4d slow = naive_conv(x, spec, params);
    for (std::size_t i = 0; i < fast.size(); ++i)
      max_abs = std::max(max_abs, std::abs(fast.data()[i] - slow.data()[i]));
  }
  if (verbose)
    std::printf("conv oracle battery: %d specs, max abs deviation %.3e\n", spec_count, max_abs);
  return max_abs;
}

}  // namespace listennet
