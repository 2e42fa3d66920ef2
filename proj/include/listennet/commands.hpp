#pragma once

#include <string>
#include <vector>

#include "listennet/io.hpp"
#include "listennet/train.hpp"

namespace listennet {

// Everything one run needs: architecture, optimizer protocol, windowing,
// alignment toggle, output location. CLI flags and the JSON config file both
// populate this; flags win.
struct RunConfig {
  SplitMode mode = SplitMode::SubjectDependent;
  double window_seconds = 1.0;
  double stride_seconds = 1.0;
  bool align = true;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  // Architecture fields; channels/window_len are derived from the manifest
  // and window_seconds at run time.
  int d_depth = 16;
  int k0 = 8;
  std::array<int, 4> mste_kernels{1, 2, 3, 5};
  int dilation = 1;
  int groups = 8;
  bool use_mste = true;
  bool use_cna = true;
  // Optimizer protocol; negative values mean "per-mode default".
  double learning_rate = -1.0;
  double weight_decay = 3e-4;
  int batch_size = -1;
  int max_epochs = 100;
  int patience = 10;
  double val_fraction_loso = 0.1;

  ModelConfig model_config(int channels, int window_len) const;
  TrainConfig train_config() const;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

// Window length in samples; window_seconds*fs must land on an integer.
int window_samples(double seconds, float fs);

struct FoldSummary {
  int fold = 0;
  std::string subject;
  double window_seconds = 0.0;
  double test_accuracy = 0.0;
};

// prep: z-score, per-subject Euclidean alignment, rewrite the recordings plus
// a manifest copy into out_dir; prints the post-alignment whitening deviation
// per subject.
int cmd_prep(const std::string& manifest_path, const RunConfig& config);

// train: preprocessing -> splits -> training -> evaluation; one summary row
// per fold. Artifacts: summary.tsv, history_fold<k>.tsv, params_fold<k>.lnp.
std::vector<FoldSummary> run_training(const std::string& manifest_path, const RunConfig& config);
int cmd_train(const std::string& manifest_path, const RunConfig& config);

// eval: accuracy of a saved snapshot over every window in the manifest.
int cmd_eval(const std::string& manifest_path, const std::string& params_path,
             const RunConfig& config);

// audit: exact parameter/MAC counts plus millions-rounded values.
int cmd_audit(const ModelConfig& config);

// gradcheck/selftest: oracle batteries; exit 0 iff all gates pass.
int cmd_gradcheck(std::uint64_t seed);
int cmd_selftest(std::uint64_t seed);

int cmd_synth(const SynthSpec& spec, const std::string& out_dir);

}  // namespace listennet
