#include <cmath>
#include <random>

#include "doctest.h"
#include "listennet/model.hpp"

using namespace listennet;

namespace {

Tensor4 random_tensor(Shape4 shape, std::mt19937& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor4 t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.channels = 8;
  c.window_len = 32;
  c.d_depth = 8;
  c.groups = 4;
  return c;
}

}  // namespace

TEST_CASE("init_params: determinism, unit gammas, fan-in bound") {
  ModelConfig config = make_model_config(64, 128);
  ListenNetParams a = init_params<float>(config, 42);
  ListenNetParams b = init_params<float>(config, 42);
  bool identical = true;
  std::vector<std::pair<const float*, std::size_t>> sa, sb;
  a.for_each_trainable(
      [&](const std::string&, const float* p, std::size_t n) { sa.push_back({p, n}); });
  b.for_each_trainable(
      [&](const std::string&, const float* p, std::size_t n) { sb.push_back({p, n}); });
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t i = 0; i < sa[s].second; ++i)
      identical = identical && (sa[s].first[i] == sb[s].first[i]);
  CHECK(identical);

  for (float g : a.mste_bn.affine.gamma) CHECK(g == 1.0f);
  for (float g : a.cna_gn_t.gamma) CHECK(g == 1.0f);
  for (float g : a.cna_gn_s.gamma) CHECK(g == 1.0f);

  // Depthwise temporal conv: fan_in = 1*1*8, bound sqrt(6/8).
  const float bound = std::sqrt(6.0f / 8.0f);
  float max_abs = 0.0f;
  for (std::size_t i = 0; i < a.stde_t_dw.weight.size(); ++i)
    max_abs = std::max(max_abs, std::abs(a.stde_t_dw.weight.data()[i]));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.5f * bound);  // 128 uniform draws land near the bound

  ModelConfig bad = config;
  bad.d_depth = 6;
  CHECK_THROWS_AS(init_params<float>(bad, 1), ConfigError);
}

TEST_CASE("stde shapes for the dataset configurations") {
  std::mt19937 rng(51);
  for (int channels : {64, 32}) {
    ModelConfig config = make_model_config(channels, 128);
    ListenNetParams params = init_params<float>(config, 3);
    Tensor4 x = random_tensor({2, 1, channels, 128}, rng);
    StdeOut<float> out = stde_forward(x, params, config);
    CHECK(out.e_t.shape() == Shape4{2, 16, channels, 121});
    CHECK(out.e_s.shape() == Shape4{2, 16, 1, 121});
  }
}

TEST_CASE("stde: zero input with zero biases stays exactly zero") {
  ModelConfig config = make_model_config(16, 64);
  ListenNetParams params = init_params<float>(config, 4);  // biases init to zero
  Tensor4 x({1, 1, 16, 64}, 0.0f);
  StdeOut<float> out = stde_forward(x, params, config);
  for (std::size_t i = 0; i < out.e_t.size(); ++i) CHECK(out.e_t.data()[i] == 0.0f);
  for (std::size_t i = 0; i < out.e_s.size(); ++i) CHECK(out.e_s.data()[i] == 0.0f);
}

TEST_CASE("mste: multi-scale shapes and the ablation toggle") {
  std::mt19937 rng(52);
  ModelConfig config = make_model_config(64, 128);
  ListenNetParams params = init_params<float>(config, 5);
  Tensor4 x = random_tensor({1, 1, 64, 128}, rng);
  StdeOut<float> stde = stde_forward(x, params, config);

  MsteOut<float> mste = mste_forward(stde.e_t, stde.e_s, params, config, true);
  CHECK(config.t_min() == 117);
  CHECK(mste.u.shape() == Shape4{1, 16, 64, 117});
  CHECK(mste.s.shape() == Shape4{1, 16, 1, 121});
  CHECK(mste.e_s_prime.shape() == Shape4{1, 16, 1, 121});

  ModelConfig ablated = config;
  ablated.use_mste = false;
  MsteOut<float> off = mste_forward(stde.e_t, stde.e_s, params, ablated, true);
  CHECK(off.e_s_prime.size() == stde.e_s.size());
  for (std::size_t i = 0; i < stde.e_s.size(); ++i)
    CHECK(off.e_s_prime.data()[i] == stde.e_s.data()[i]);
}

TEST_CASE("mste: zero temporal input with zero biases leaves E_s untouched") {
  std::mt19937 rng(59);
  ModelConfig config = make_model_config(16, 64);
  ListenNetParams params = init_params<float>(config, 12);  // beta/biases zero at init
  Tensor4 e_t({1, 16, 16, config.t_prime()}, 0.0f);
  Tensor4 e_s = random_tensor({1, 16, 1, config.t_prime()}, rng);
  MsteOut<float> out = mste_forward(e_t, e_s, params, config, true);
  for (std::size_t i = 0; i < e_s.size(); ++i)
    CHECK(out.e_s_prime.data()[i] == doctest::Approx(e_s.data()[i]).epsilon(1e-6));
}

TEST_CASE("depth_align: row means, constants, degenerate identity") {
  std::mt19937 rng(53);
  Tensor4 x = random_tensor({1, 2, 64, 10}, rng);
  Tensor4 aligned = depth_align(x, 16);
  CHECK(aligned.shape() == Shape4{1, 2, 16, 10});
  for (int i = 0; i < 16; ++i)
    for (int w = 0; w < 10; ++w) {
      double mean = 0.0;
      for (int h = 4 * i; h < 4 * i + 4; ++h) mean += x.at(0, 1, h, w);
      CHECK(aligned.at(0, 1, i, w) == doctest::Approx(mean / 4.0).epsilon(1e-5));
    }

  Tensor4 constant({1, 3, 24, 7}, 1.75f);
  Tensor4 ca = depth_align(constant, 8);
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca.data()[i] == doctest::Approx(1.75f));

  Tensor4 same = random_tensor({1, 2, 16, 5}, rng);
  Tensor4 identity = depth_align(same, 16);
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(identity.data()[i] == same.data()[i]);

  Tensor4 small({1, 2, 8, 5}, 0.0f);
  CHECK_THROWS_AS(depth_align(small, 16), ShapeError);
}

TEST_CASE("cna: group shapes, ablation toggle, uniform attention averages rows") {
  std::mt19937 rng(54);
  ModelConfig config = make_model_config(64, 128);
  ListenNetParams params = init_params<float>(config, 6);
  const int tp = config.t_prime();
  Tensor4 e_s_prime = random_tensor({2, 16, 1, tp}, rng);

  // Constant temporal branch: pooled gate values are equal within each group,
  // so the first attention row is exactly uniform.
  Tensor4 e_t_aligned({2, 16, 16, tp}, 0.31f);
  CnaOut<float> out = cna_forward(e_t_aligned, e_s_prime, params, config);
  CHECK(out.e.shape() == Shape4{2, 16, 1, tp});
  CHECK(out.cache.sig_w.shape() == Shape4{16, 1, 1, tp});  // (B*G,1,1,T')
  for (int n = 0; n < 16; ++n) {
    CHECK(out.cache.a1.at(n, 0, 0, 0) == doctest::Approx(0.5f).epsilon(1e-5));
    CHECK(out.cache.a1.at(n, 0, 0, 1) == doctest::Approx(0.5f).epsilon(1e-5));
  }
  // M1 (depth 0 of the fusion input) is the mean of F_2's two depth rows.
  const Tensor4& z = out.cache.fuse.x;
  for (int n = 0; n < 16; ++n)
    for (int j = 0; j < tp; j += 17) {
      const float mean =
          0.5f * (out.cache.f2.at(n, 0, 0, j) + out.cache.f2.at(n, 1, 0, j));
      CHECK(z.at(n, 0, 0, j) == doctest::Approx(mean).epsilon(1e-4));
    }

  ModelConfig ablated = config;
  ablated.use_cna = false;
  CnaOut<float> off = cna_forward(e_t_aligned, e_s_prime, params, ablated);
  for (std::size_t i = 0; i < e_s_prime.size(); ++i)
    CHECK(off.e.data()[i] == e_s_prime.data()[i]);
}

TEST_CASE("classify: zero weights, frozen softmax evaluation, rows sum to one") {
  ModelConfig config = make_model_config(16, 64);
  ListenNetParams params = init_params<float>(config, 7);
  std::mt19937 rng(55);
  Tensor4 e = random_tensor({3, 16, 1, 57}, rng);

  params.classifier.weight.fill(0.0f);
  params.classifier.bias = {0.0f, 0.0f};
  ClassifyOut<float> out = classify(e, params);
  for (int b = 0; b < 3; ++b) {
    CHECK(out.probs.at(b, 0, 0, 0) == doctest::Approx(0.5f));
    CHECK(out.probs.at(b, 0, 0, 1) == doctest::Approx(0.5f));
  }

  params.classifier.bias = {std::log(3.0f), 0.0f};
  ClassifyOut<float> skew = classify(e, params);
  for (int b = 0; b < 3; ++b) {
    CHECK(skew.probs.at(b, 0, 0, 0) == doctest::Approx(0.75f).epsilon(1e-5));
    CHECK(skew.probs.at(b, 0, 0, 1) == doctest::Approx(0.25f).epsilon(1e-5));
    CHECK(skew.probs.at(b, 0, 0, 0) + skew.probs.at(b, 0, 0, 1) ==
          doctest::Approx(1.0f).epsilon(1e-6));
  }
}

TEST_CASE("model_forward: shape pipeline and batch behavior in inference mode") {
  std::mt19937 rng(56);
  ModelConfig config = make_model_config(64, 128);
  ListenNetParams params = init_params<float>(config, 8);
  Tensor4 x = random_tensor({3, 1, 64, 128}, rng);
  ModelOut<float> out = model_forward(x, params, config, false);
  CHECK(out.probs.shape() == Shape4{3, 1, 1, 2});
  CHECK(out.cache.e_t.shape() == Shape4{3, 16, 64, 121});
  CHECK(out.cache.e_s.shape() == Shape4{3, 16, 1, 121});
  CHECK(out.cache.u.shape() == Shape4{3, 16, 64, 117});
  CHECK(out.cache.e_s_prime.shape() == Shape4{3, 16, 1, 121});
  CHECK(out.cache.e_t_aligned.shape() == Shape4{3, 16, 16, 121});
  CHECK(out.cache.e.shape() == Shape4{3, 16, 1, 121});

  // Identical windows produce identical probability rows.
  Tensor4 same({2, 1, 64, 128});
  for (int b = 0; b < 2; ++b)
    for (int h = 0; h < 64; ++h)
      for (int w = 0; w < 128; ++w) same.at(b, 0, h, w) = x.at(0, 0, h, w);
  ModelOut<float> dup = model_forward(same, params, config, false);
  CHECK(dup.probs.at(0, 0, 0, 0) == dup.probs.at(1, 0, 0, 0));
  CHECK(dup.probs.at(0, 0, 0, 1) == dup.probs.at(1, 0, 0, 1));

  // Permuting the batch permutes the rows.
  Tensor4 swapped({3, 1, 64, 128});
  const int perm[3] = {2, 0, 1};
  for (int b = 0; b < 3; ++b)
    for (int h = 0; h < 64; ++h)
      for (int w = 0; w < 128; ++w) swapped.at(b, 0, h, w) = x.at(perm[b], 0, h, w);
  ModelOut<float> pout = model_forward(swapped, params, config, false);
  for (int b = 0; b < 3; ++b) {
    CHECK(pout.probs.at(b, 0, 0, 0) == doctest::Approx(out.probs.at(perm[b], 0, 0, 0)));
    CHECK(pout.probs.at(b, 0, 0, 1) == doctest::Approx(out.probs.at(perm[b], 0, 0, 1)));
  }
}

TEST_CASE("model_backward: zero upstream, cache reuse, disconnected ablation grads") {
  std::mt19937 rng(57);
  ModelConfig config = toy_config();
  ListenNetParams params = init_params<float>(config, 9);
  Tensor4 x = random_tensor({2, 1, 8, 32}, rng);

  ModelOut<float> out = model_forward(x, params, config, true);
  ListenNetParams grads = model_backward(out.cache, Tensor4(out.probs.shape(), 0.0f));
  grads.for_each_trainable([&](const std::string&, const float* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) CHECK(g[i] == 0.0f);
  });
  CHECK_THROWS_AS(model_backward(out.cache, Tensor4(out.probs.shape(), 0.0f)), UsageError);

  ModelConfig ablated = config;
  ablated.use_mste = false;
  ModelOut<float> out2 = model_forward(x, params, ablated, true);
  ListenNetParams g2 = model_backward(out2.cache, Tensor4(out2.probs.shape(), 0.1f));
  for (const auto& branch : g2.mste_branch)
    for (std::size_t i = 0; i < branch.weight.size(); ++i) CHECK(branch.weight.data()[i] == 0.0f);
  for (std::size_t i = 0; i < g2.mste_skip.weight.size(); ++i)
    CHECK(g2.mste_skip.weight.data()[i] == 0.0f);
  for (float v : g2.mste_bn.affine.gamma) CHECK(v == 0.0f);
  // The classifier still learns.
  bool any_nonzero = false;
  for (std::size_t i = 0; i < g2.classifier.weight.size(); ++i)
    any_nonzero = any_nonzero || g2.classifier.weight.data()[i] != 0.0f;
  CHECK(any_nonzero);
}

TEST_CASE("ablation toggles never change upstream activations") {
  std::mt19937 rng(58);
  ModelConfig config = toy_config();
  ListenNetParams params = init_params<float>(config, 10);
  Tensor4 x = random_tensor({2, 1, 8, 32}, rng);
  ModelOut<float> full = model_forward(x, params, config, false);

  ModelConfig no_cna = config;
  no_cna.use_cna = false;
  ModelOut<float> ablated = model_forward(x, params, no_cna, false);
  for (std::size_t i = 0; i < full.cache.e_s_prime.size(); ++i)
    CHECK(ablated.cache.e_s_prime.data()[i] == full.cache.e_s_prime.data()[i]);
  for (std::size_t i = 0; i < full.cache.e_t.size(); ++i)
    CHECK(ablated.cache.e_t.data()[i] == full.cache.e_t.data()[i]);
  // With CNA off the output head consumes E_s' directly.
  for (std::size_t i = 0; i < ablated.cache.e.size(); ++i)
    CHECK(ablated.cache.e.data()[i] == full.cache.e_s_prime.data()[i]);
}

TEST_CASE("count_params: frozen golden values and monotonicity") {
  ModelConfig config = make_model_config(64, 128);
  // Layer table: stde 32+144+272+1040, mste 720+32+1040, cna 8+18, head 34.
  CHECK(count_params(config) == 3340);

  ListenNetParams params = init_params<float>(config, 11);
  CHECK(params.trainable_count() == 3340);

  ModelConfig half = make_model_config(32, 128);
  CHECK(count_params(half) == 2316);
  CHECK(count_params(half) < count_params(config));

  ModelConfig deep = config;
  deep.d_depth = 32;
  deep.groups = 16;
  CHECK(count_macs(deep) > 2 * count_macs(config));
  CHECK(count_params(deep) > 2 * count_params(config));
}

TEST_CASE("count_macs: frozen golden value, instance check, linear scaling in T") {
  ModelConfig config = make_model_config(64, 128);
  // Sum over the layer table at C=64, T=128; the stde pointwise term alone is
  // 16*64*128 = 131072.
  CHECK(count_macs(config) == 8734968);
  const double ratio = static_cast<double>(count_macs(config)) / 12.16e6;
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);

  ModelConfig longer = make_model_config(64, 256);
  const double scale = static_cast<double>(count_macs(longer)) / count_macs(config);
  CHECK(scale > 1.9);
  CHECK(scale < 2.2);

  ModelConfig c32 = make_model_config(32, 128);
  CHECK(count_macs(c32) < count_macs(config));
}

TEST_CASE("count_macs honors the ablation toggles") {
  ModelConfig config = make_model_config(64, 128);
  ModelConfig no_mste = config;
  no_mste.use_mste = false;
  ModelConfig no_cna = config;
  no_cna.use_cna = false;
  CHECK(count_macs(no_mste) < count_macs(config));
  CHECK(count_macs(no_cna) < count_macs(config));
}
