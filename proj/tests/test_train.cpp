#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "listennet/train.hpp"
#include "listennet/verify.hpp"

using namespace listennet;

namespace {

std::vector<DecisionWindow> synthetic_windows(int subjects, int per_subject, int channels,
                                              int length, std::uint64_t seed) {
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::vector<DecisionWindow> out;
  for (int s = 0; s < subjects; ++s) {
    for (int i = 0; i < per_subject; ++i) {
      DecisionWindow w;
      w.channels = channels;
      w.length = length;
      w.subject_id = "S" + std::to_string(s);
      w.trial_id = "T" + std::to_string(i);
      w.label = (i % 2 == 0) ? Label::Left : Label::Right;
      w.data.resize(static_cast<std::size_t>(channels) * length);
      // Class signal: which half of the channels carries a fixed offset.
      const int lo = (w.label == Label::Left) ? 0 : channels / 2;
      const int hi = (w.label == Label::Left) ? channels / 2 : channels;
      for (int c = 0; c < channels; ++c)
        for (int t = 0; t < length; ++t) {
          float v = 0.3f * noise(rng);
          if (c >= lo && c < hi)
            v += std::sin(0.4f * static_cast<float>(t) + 0.2f * static_cast<float>(c));
          w.data[static_cast<std::size_t>(c) * length + t] = v;
        }
      out.push_back(std::move(w));
    }
  }
  return out;
}

void check_disjoint_cover(const SplitPlan& plan, std::size_t total) {
  std::set<int> seen;
  for (int i : plan.train) CHECK(seen.insert(i).second);
  for (int i : plan.val) CHECK(seen.insert(i).second);
  for (int i : plan.test) CHECK(seen.insert(i).second);
  CHECK(seen.size() == total);
  if (!seen.empty()) {
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == static_cast<int>(total) - 1);
  }
}

}  // namespace

TEST_CASE("bce_loss: perfect prediction, uniform prediction, finite differences") {
  Tensor4d perfect({2, 1, 1, 2});
  perfect.at(0, 0, 0, 0) = 0.0;
  perfect.at(0, 0, 0, 1) = 1.0;
  perfect.at(1, 0, 0, 0) = 0.0;
  perfect.at(1, 0, 0, 1) = 1.0;
  auto [loss_perfect, g_perfect] = bce_loss(perfect, {1, 1});
  CHECK(loss_perfect < 2e-7);

  Tensor4d uniform({3, 1, 1, 2}, 0.5);
  auto [loss_uniform, g_uniform] = bce_loss(uniform, {0, 1, 0});
  CHECK(loss_uniform == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // Finite differences on the class-1 probabilities.
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> dist(0.1, 0.9);
  Tensor4d probs({4, 1, 1, 2});
  std::vector<int> labels = {0, 1, 1, 0};
  for (int b = 0; b < 4; ++b) {
    const double q = dist(rng);
    probs.at(b, 0, 0, 0) = 1.0 - q;
    probs.at(b, 0, 0, 1) = q;
  }
  auto [loss0, grad] = bce_loss(probs, labels);
  auto eval = [&] { return bce_loss(probs, labels).first; };
  GradCheckReport r = finite_diff_check(
      "bce", eval, probs.data(), grad.data(), probs.size(), 1e-6, 1e-5, 8, rng);
  CHECK(r.pass);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("bce_loss is non-negative for any probabilities") {
  std::mt19937 rng(70);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor4d probs({3, 1, 1, 2});
    std::vector<int> labels;
    for (int b = 0; b < 3; ++b) {
      const double q = dist(rng);
      probs.at(b, 0, 0, 0) = 1.0 - q;
      probs.at(b, 0, 0, 1) = q;
      labels.push_back(trial % 2);
    }
    CHECK(bce_loss(probs, labels).first >= 0.0);
  }
}

TEST_CASE("adam: first-step magnitude, zero-grad identity, pure decay") {
  ModelConfig config;
  config.channels = 8;
  config.window_len = 32;
  config.d_depth = 8;
  config.groups = 4;
  ListenNetParams params = zero_params<float>(config);
  ListenNetParams grads = zero_params<float>(config);
  AdamState state = AdamState::init(params);

  // param 0, grad 1: bias-corrected first step has magnitude ~lr.
  grads.for_each_trainable([&](const std::string&, float* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] = 1.0f;
  });
  adam_step(params, grads, state, 0.1f, 0.0f);
  params.for_each_trainable([&](const std::string&, const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] + 0.1f) < 1e-6f);
  });

  // Zero grads and zero decay leave params untouched (moments decay, update
  // is exactly zero because m stays zero).
  ListenNetParams fresh = init_params<float>(config, 3);
  ListenNetParams snapshot = fresh;
  ListenNetParams zero_grads = zero_params<float>(config);
  AdamState s2 = AdamState::init(fresh);
  adam_step(fresh, zero_grads, s2, 0.1f, 0.0f);
  bool unchanged = true;
  std::vector<std::pair<const float*, std::size_t>> sa, sb;
  fresh.for_each_trainable(
      [&](const std::string&, const float* p, std::size_t n) { sa.push_back({p, n}); });
  snapshot.for_each_trainable(
      [&](const std::string&, const float* p, std::size_t n) { sb.push_back({p, n}); });
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t i = 0; i < sa[s].second; ++i)
      unchanged = unchanged && sa[s].first[i] == sb[s].first[i];
  CHECK(unchanged);

  // Weight decay alone shrinks parameters toward zero monotonically.
  ListenNetParams decaying = init_params<float>(config, 4);
  AdamState s3 = AdamState::init(decaying);
  float before = std::abs(decaying.stde_s_pw.weight.data()[0]);
  for (int step = 0; step < 5; ++step) {
    adam_step(decaying, zero_grads, s3, 0.01f, 0.1f);
    const float after = std::abs(decaying.stde_s_pw.weight.data()[0]);
    CHECK(after <= before + 1e-7f);
    before = after;
  }
}

TEST_CASE("adam skips the step when a gradient is non-finite") {
  ModelConfig config;
  config.channels = 8;
  config.window_len = 32;
  config.d_depth = 8;
  config.groups = 4;
  ListenNetParams params = init_params<float>(config, 5);
  ListenNetParams snapshot = params;
  ListenNetParams grads = zero_params<float>(config);
  grads.classifier.bias[0] = std::numeric_limits<float>::quiet_NaN();
  AdamState state = AdamState::init(params);
  adam_step(params, grads, state, 0.1f, 0.0f);
  CHECK(state.skipped_steps == 1);
  CHECK(state.t == 0);
  CHECK(params.classifier.weight.data()[0] == snapshot.classifier.weight.data()[0]);
}

TEST_CASE("split_subject_dependent: 8:1:1 counts, determinism, minimum size") {
  auto windows = synthetic_windows(1, 100, 4, 16, 1);
  SplitPlan plan = split_subject_dependent(windows, 7);
  CHECK(plan.train.size() == 80);
  CHECK(plan.val.size() == 10);
  CHECK(plan.test.size() == 10);
  check_disjoint_cover(plan, 100);

  auto odd = synthetic_windows(1, 101, 4, 16, 2);
  SplitPlan plan_odd = split_subject_dependent(odd, 7);
  CHECK(plan_odd.train.size() == 81);
  CHECK(plan_odd.val.size() == 10);
  CHECK(plan_odd.test.size() == 10);

  SplitPlan again = split_subject_dependent(windows, 7);
  CHECK(again.train == plan.train);
  CHECK(again.val == plan.val);
  CHECK(again.test == plan.test);

  auto tiny = synthetic_windows(1, 9, 4, 16, 3);
  CHECK_THROWS_AS(split_subject_dependent(tiny, 1), ConfigError);

  auto mixed = synthetic_windows(2, 10, 4, 16, 4);
  CHECK_THROWS_AS(split_subject_dependent(mixed, 1), ConfigError);
}

TEST_CASE("split_loso: per-subject folds, empty validation edge, no leakage") {
  auto windows = synthetic_windows(4, 12, 4, 16, 5);
  for (int fold = 0; fold < 4; ++fold) {
    const std::string subject = "S" + std::to_string(fold);
    SplitPlan plan = split_loso(windows, subject, 9, 0.1f);
    check_disjoint_cover(plan, windows.size());
    CHECK(plan.test.size() == 12);
    for (int i : plan.test) CHECK(windows[static_cast<std::size_t>(i)].subject_id == subject);
    for (int i : plan.train) CHECK(windows[static_cast<std::size_t>(i)].subject_id != subject);
    for (int i : plan.val) CHECK(windows[static_cast<std::size_t>(i)].subject_id != subject);
  }

  SplitPlan no_val = split_loso(windows, "S1", 9, 0.0f);
  CHECK(no_val.val.empty());
  CHECK(no_val.train.size() == 36);

  CHECK_THROWS_AS(split_loso(windows, "S9", 9, 0.1f), ConfigError);
  auto solo = synthetic_windows(1, 12, 4, 16, 6);
  CHECK_THROWS_AS(split_loso(solo, "S0", 9, 0.1f), ConfigError);
}

TEST_CASE("early stopper: patience-1 with worsening scores stops after epoch 2") {
  EarlyStopper stopper{1};
  CHECK(stopper.update(1, 0.9));
  CHECK(!stopper.should_stop());
  CHECK(!stopper.update(2, 0.8));
  CHECK(stopper.should_stop());
  CHECK(stopper.best_epoch == 1);

  EarlyStopper plateau{2};
  CHECK(plateau.update(1, 0.5));
  CHECK(!plateau.update(2, 0.5));  // ties do not count as improvement
  CHECK(!plateau.update(3, 0.5));
  CHECK(plateau.should_stop());
}

TEST_CASE("train_loop: determinism and learnability on a separable task") {
  auto windows = synthetic_windows(1, 60, 8, 32, 8);
  ModelConfig mc;
  mc.channels = 8;
  mc.window_len = 32;
  mc.d_depth = 8;
  mc.groups = 4;
  TrainConfig tc;
  tc.learning_rate = 2e-3f;
  tc.batch_size = 16;
  tc.max_epochs = 8;
  tc.patience = 8;
  tc.seed = 13;
  SplitPlan plan = split_subject_dependent(windows, tc.seed);

  TrainResult a = train_loop(windows, plan, mc, tc);
  TrainResult b = train_loop(windows, plan, mc, tc);
  CHECK(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_acc == b.history[i].val_acc);
  }
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.best_epoch >= 1);

  CHECK_THROWS_AS(train_loop(windows, SplitPlan{}, mc, tc), ConfigError);
}

TEST_CASE("evaluate: perfect model, order invariance, ties, empty input") {
  auto windows = synthetic_windows(1, 20, 8, 32, 9);
  ModelConfig mc;
  mc.channels = 8;
  mc.window_len = 32;
  mc.d_depth = 8;
  mc.groups = 4;
  ListenNetParams params = init_params<float>(mc, 14);

  std::vector<int> idx;
  for (int i = 0; i < 20; ++i) idx.push_back(i);

  // Zero classifier: probabilities are exactly (0.5, 0.5), ties resolve to
  // class 0, so accuracy equals the Left fraction.
  params.classifier.weight.fill(0.0f);
  params.classifier.bias = {0.0f, 0.0f};
  double left_fraction = 0.0;
  for (const auto& w : windows) left_fraction += (w.label == Label::Left) ? 1.0 : 0.0;
  left_fraction /= windows.size();
  CHECK(evaluate(params, mc, windows, idx) == doctest::Approx(left_fraction));

  std::vector<int> reversed(idx.rbegin(), idx.rend());
  CHECK(evaluate(params, mc, windows, reversed) == evaluate(params, mc, windows, idx));

  CHECK_THROWS_AS(evaluate(params, mc, windows, {}), MetricError);
}
