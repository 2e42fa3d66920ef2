#include "listennet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

namespace listennet {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0f || weight_decay < 0.0f)
    throw ConfigError("learning rate must be positive, weight decay non-negative");
  if (batch_size < 1 || max_epochs < 1 || patience < 1)
    throw ConfigError("batch_size, max_epochs, patience must be >= 1");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (val_fraction_loso < 0.0f || val_fraction_loso >= 1.0f)
    throw ConfigError("val_fraction_loso must lie in [0,1)");
}

template <class T>
std::pair<double, Tensor4T<T>> bce_loss(const Tensor4T<T>& probs, const std::vector<int>& labels) {
  const int b_count = probs.batch();
  if (probs.width() != 2 || probs.depth() != 1 || probs.height() != 1)
    throw ShapeError("bce_loss expects probabilities shaped (B,1,1,2)");
  if (static_cast<int>(labels.size()) != b_count)
    throw ShapeError("bce_loss label count mismatch");
  const double lo = 1e-7, hi = 1.0 - 1e-7;
  Tensor4T<T> grad(probs.shape(), T(0));
  double loss = 0.0;
  for (int b = 0; b < b_count; ++b) {
    const double q_raw = probs.at(b, 0, 0, 1);
    const double q = std::clamp(q_raw, lo, hi);
    const double y = labels[static_cast<std::size_t>(b)];
    loss -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    if (q_raw > lo && q_raw < hi)
      grad.at(b, 0, 0, 1) =
          static_cast<T>(-(y / q - (1.0 - y) / (1.0 - q)) / static_cast<double>(b_count));
  }
  return {loss / static_cast<double>(b_count), std::move(grad)};
}

AdamState AdamState::init(const ListenNetParams& params) {
  AdamState s;
  params.for_each_trainable([&](const std::string&, const float*, std::size_t n) {
    s.m.emplace_back(n, 0.0f);
    s.v.emplace_back(n, 0.0f);
  });
  return s;
}

void adam_step(ListenNetParams& params, const ListenNetParams& grads, AdamState& state, float lr,
               float weight_decay) {
  std::vector<std::pair<float*, std::size_t>> pspans;
  std::vector<std::pair<const float*, std::size_t>> gspans;
  params.for_each_trainable(
      [&](const std::string&, float* p, std::size_t n) { pspans.push_back({p, n}); });
  grads.for_each_trainable(
      [&](const std::string&, const float* g, std::size_t n) { gspans.push_back({g, n}); });
  if (pspans.size() != state.m.size()) throw UsageError("adam state does not match params");

  for (std::size_t s = 0; s < gspans.size(); ++s)
    for (std::size_t i = 0; i < gspans[s].second; ++i)
      if (!std::isfinite(gspans[s].first[i])) {
        ++state.skipped_steps;
        std::fprintf(stderr, "warning: non-finite gradient, optimizer step skipped\n");
        return;
      }

  ++state.t;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.t);
  for (std::size_t s = 0; s < pspans.size(); ++s) {
    float* p = pspans[s].first;
    const float* gr = gspans[s].first;
    float* m = state.m[s].data();
    float* v = state.v[s].data();
    for (std::size_t i = 0; i < pspans[s].second; ++i) {
      const float g = gr[i] + weight_decay * p[i];
      m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

SplitPlan split_subject_dependent(const std::vector<DecisionWindow>& windows, std::uint64_t seed) {
  const int n = static_cast<int>(windows.size());
  if (n < 10) throw ConfigError("subject-dependent split needs at least 10 windows");
  for (const auto& w : windows)
    if (w.subject_id != windows.front().subject_id)
      throw ConfigError("subject-dependent split expects windows from one subject");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_val = n / 10, n_test = n / 10;
  const int n_train = n - n_val - n_test;
  SplitPlan plan;
  plan.mode = SplitMode::SubjectDependent;
  plan.train.assign(idx.begin(), idx.begin() + n_train);
  plan.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  plan.test.assign(idx.begin() + n_train + n_val, idx.end());
  return plan;
}

SplitPlan split_loso(const std::vector<DecisionWindow>& windows, const std::string& test_subject,
                     std::uint64_t seed, float val_fraction) {
  std::set<std::string> subjects;
  for (const auto& w : windows) subjects.insert(w.subject_id);
  if (subjects.size() < 2) throw ConfigError("LOSO needs at least 2 subjects");
  if (subjects.find(test_subject) == subjects.end())
    throw ConfigError("unknown LOSO test subject '" + test_subject + "'");
  SplitPlan plan;
  plan.mode = SplitMode::Loso;
  std::vector<int> rest;
  for (int i = 0; i < static_cast<int>(windows.size()); ++i) {
    if (windows[static_cast<std::size_t>(i)].subject_id == test_subject)
      plan.test.push_back(i);
    else
      rest.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  const int n_val = static_cast<int>(static_cast<double>(rest.size()) * val_fraction);
  plan.val.assign(rest.begin(), rest.begin() + n_val);
  plan.train.assign(rest.begin() + n_val, rest.end());
  return plan;
}

bool EarlyStopper::update(int epoch, double score) {
  if (score > best) {
    best = score;
    best_epoch = epoch;
    epochs_since_best = 0;
    return true;
  }
  ++epochs_since_best;
  return false;
}

Tensor4 make_batch(const std::vector<DecisionWindow>& windows, const std::vector<int>& indices,
                   std::size_t begin, std::size_t end) {
  const int b_count = static_cast<int>(end - begin);
  const DecisionWindow& first = windows[static_cast<std::size_t>(indices[begin])];
  Tensor4 batch({b_count, 1, first.channels, first.length});
  for (int b = 0; b < b_count; ++b) {
    const DecisionWindow& w = windows[static_cast<std::size_t>(indices[begin + b])];
    for (int c = 0; c < w.channels; ++c)
      for (int t = 0; t < w.length; ++t) batch.at(b, 0, c, t) = w.at(c, t);
  }
  return batch;
}

double evaluate(ListenNetParams& params, const ModelConfig& config,
                const std::vector<DecisionWindow>& windows, const std::vector<int>& indices) {
  if (indices.empty()) throw MetricError("evaluate on an empty window list");
  const std::size_t chunk = 256;
  long long correct = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const std::size_t end = std::min(indices.size(), begin + chunk);
    Tensor4 batch = make_batch(windows, indices, begin, end);
    auto out = model_forward(batch, params, config, false);
    for (std::size_t b = begin; b < end; ++b) {
      const int bi = static_cast<int>(b - begin);
      const float p0 = out.probs.at(bi, 0, 0, 0);
      const float p1 = out.probs.at(bi, 0, 0, 1);
      const int pred = (p1 > p0) ? 1 : 0;  // tie goes to class 0
      if (pred == static_cast<int>(windows[static_cast<std::size_t>(indices[b])].label)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

TrainResult train_loop(const std::vector<DecisionWindow>& windows, const SplitPlan& plan,
                       const ModelConfig& model_config, const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  if (plan.train.empty()) throw ConfigError("training set is empty");

  ListenNetParams params = init_params<float>(model_config, train_config.seed);
  AdamState adam = AdamState::init(params);
  std::mt19937_64 rng(train_config.seed + 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  result.best_params = params;
  EarlyStopper stopper{train_config.patience};
  std::vector<int> order = plan.train;

  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(train_config.batch_size));
      Tensor4 batch = make_batch(windows, order, begin, end);
      std::vector<int> labels;
      labels.reserve(end - begin);
      for (std::size_t b = begin; b < end; ++b)
        labels.push_back(static_cast<int>(windows[static_cast<std::size_t>(order[b])].label));
      auto out = model_forward(batch, params, model_config, true);
      auto [loss, grad_probs] = bce_loss(out.probs, labels);
      loss_sum += loss * static_cast<double>(end - begin);
      ListenNetParams grads = model_backward(out.cache, grad_probs);
      adam_step(params, grads, adam, train_config.learning_rate, train_config.weight_decay);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());

    double val_acc = -1.0;
    double score;
    if (!plan.val.empty()) {
      val_acc = evaluate(params, model_config, windows, plan.val);
      score = val_acc;
    } else {
      score = -train_loss;  // no validation set: early-stop on training loss
    }
    result.history.push_back({epoch, train_loss, val_acc});
    if (stopper.update(epoch, score)) {
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_val_acc = val_acc;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

template std::pair<double, Tensor4T<float>> bce_loss<float>(const Tensor4T<float>&,
                                                            const std::vector<int>&);
template std::pair<double, Tensor4T<double>> bce_loss<double>(const Tensor4T<double>&,
                                                              const std::vector<int>&);

}  // namespace listennet
