#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "listennet/model.hpp"
#include "listennet/preprocess.hpp"

namespace listennet {

enum class SplitMode { SubjectDependent, Loso };

struct TrainConfig {
  SplitMode mode = SplitMode::SubjectDependent;
  float learning_rate = 5e-4f;
  float weight_decay = 3e-4f;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  float val_fraction_loso = 0.1f;

  void validate() const;
};

inline TrainConfig subject_dependent_defaults() { return TrainConfig{}; }

inline TrainConfig loso_defaults() {
  TrainConfig c;
  c.mode = SplitMode::Loso;
  c.learning_rate = 1e-3f;
  c.batch_size = 128;
  return c;
}

// Disjoint index lists into one window population.
struct SplitPlan {
  SplitMode mode = SplitMode::SubjectDependent;
  int fold_id = 0;
  std::vector<int> train, val, test;
};

// Binary cross-entropy of Eq-style form on softmax outputs: Q is the
// probability of class 1, clamped to [1e-7, 1-1e-7] before the logs. The
// gradient is with respect to the probability tensor (zero where clamped).
template <class T>
std::pair<double, Tensor4T<T>> bce_loss(const Tensor4T<T>& probs, const std::vector<int>& labels);

// Adam first/second moment state aligned with the trainable traversal order.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  long long t = 0;
  float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  long long skipped_steps = 0;

  static AdamState init(const ListenNetParams& params);
};

// Coupled L2 weight decay added to the gradient, then the bias-corrected Adam
// update. A non-finite gradient skips the whole step with a warning.
void adam_step(ListenNetParams& params, const ListenNetParams& grads, AdamState& state, float lr,
               float weight_decay);

SplitPlan split_subject_dependent(const std::vector<DecisionWindow>& windows, std::uint64_t seed);

SplitPlan split_loso(const std::vector<DecisionWindow>& windows, const std::string& test_subject,
                     std::uint64_t seed, float val_fraction);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

// Tracks the best validation score; stop after `patience` epochs without
// improvement (strict improvement required).
struct EarlyStopper {
  int patience = 10;
  double best = -1.0;
  int best_epoch = -1;
  int epochs_since_best = 0;

  // Returns true when this epoch improved the best score.
  bool update(int epoch, double score);
  bool should_stop() const { return epochs_since_best >= patience; }
};

struct TrainResult {
  ListenNetParams best_params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_acc = 0.0;
};

// Assembles (B,1,C,T) batches from the window indices.
Tensor4 make_batch(const std::vector<DecisionWindow>& windows, const std::vector<int>& indices,
                   std::size_t begin, std::size_t end);

TrainResult train_loop(const std::vector<DecisionWindow>& windows, const SplitPlan& plan,
                       const ModelConfig& model_config, const TrainConfig& train_config);

// Accuracy of argmax predictions, ties toward class 0, inference mode.
double evaluate(ListenNetParams& params, const ModelConfig& config,
                const std::vector<DecisionWindow>& windows, const std::vector<int>& indices);

}  // namespace listennet
