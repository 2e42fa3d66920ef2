#include "listennet/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "listennet/verify.hpp"

namespace listennet {

namespace {

using nlohmann::json;

// Rethrows with the failing stage named, preserving the error category.
template <class F>
auto with_stage(const std::string& stage, F&& fn) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError("[" + stage + "] " + e.what());
  } catch (const SizeError& e) {
    throw SizeError("[" + stage + "] " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("[" + stage + "] " + e.what());
  } catch (const DataError& e) {
    throw DataError("[" + stage + "] " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("[" + stage + "] " + e.what());
  } catch (const MetricError& e) {
    throw MetricError("[" + stage + "] " + e.what());
  }
}

}  // namespace

ModelConfig RunConfig::model_config(int channels, int window_len) const {
  ModelConfig m;
  m.channels = channels;
  m.window_len = window_len;
  m.d_depth = d_depth;
  m.k0 = k0;
  m.mste_kernels = mste_kernels;
  m.dilation = dilation;
  m.groups = groups;
  m.use_mste = use_mste;
  m.use_cna = use_cna;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = (mode == SplitMode::Loso) ? loso_defaults() : subject_dependent_defaults();
  if (learning_rate > 0.0) t.learning_rate = static_cast<float>(learning_rate);
  t.weight_decay = static_cast<float>(weight_decay);
  if (batch_size > 0) t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.seed = seed;
  t.val_fraction_loso = static_cast<float>(val_fraction_loso);
  return t;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  RunConfig c;
  const std::string mode = j.value("mode", "sd");
  if (mode == "sd")
    c.mode = SplitMode::SubjectDependent;
  else if (mode == "loso")
    c.mode = SplitMode::Loso;
  else
    throw FormatError("mode must be 'sd' or 'loso'");
  c.window_seconds = j.value("window_seconds", c.window_seconds);
  c.stride_seconds = j.value("stride_seconds", c.stride_seconds);
  c.align = j.value("align", c.align);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("model")) {
    const json& m = j["model"];
    c.d_depth = m.value("d_depth", c.d_depth);
    c.k0 = m.value("k0", c.k0);
    if (m.contains("mste_kernels")) {
      auto v = m.at("mste_kernels").get<std::vector<int>>();
      if (v.size() != 4) throw FormatError("mste_kernels must list 4 kernel widths");
      std::copy(v.begin(), v.end(), c.mste_kernels.begin());
    }
    c.dilation = m.value("dilation", c.dilation);
    c.groups = m.value("groups", c.groups);
    c.use_mste = m.value("use_mste", c.use_mste);
    c.use_cna = m.value("use_cna", c.use_cna);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    c.learning_rate = t.value("learning_rate", c.learning_rate);
    c.weight_decay = t.value("weight_decay", c.weight_decay);
    c.batch_size = t.value("batch_size", c.batch_size);
    c.max_epochs = t.value("max_epochs", c.max_epochs);
    c.patience = t.value("patience", c.patience);
    c.val_fraction_loso = t.value("val_fraction_loso", c.val_fraction_loso);
  }
  return c;
}

void save_run_config(const RunConfig& c, const std::string& path) {
  json j;
  j["mode"] = (c.mode == SplitMode::Loso) ? "loso" : "sd";
  j["window_seconds"] = c.window_seconds;
  j["stride_seconds"] = c.stride_seconds;
  j["align"] = c.align;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["model"] = {{"d_depth", c.d_depth},       {"k0", c.k0},
                {"mste_kernels", c.mste_kernels}, {"dilation", c.dilation},
                {"groups", c.groups},         {"use_mste", c.use_mste},
                {"use_cna", c.use_cna}};
  j["train"] = {{"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"patience", c.patience},
                {"val_fraction_loso", c.val_fraction_loso}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write config " + path);
  out << j.dump(2) << "\n";
}

int window_samples(double seconds, float fs) {
  const double exact = seconds * static_cast<double>(fs);
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6 || rounded < 1.0)
    throw ConfigError("window length " + std::to_string(seconds) +
                      " s is not an integer number of samples at fs=" + std::to_string(fs));
  return static_cast<int>(rounded);
}

namespace {

struct PreparedData {
  // Per-subject windows in sorted subject order.
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<DecisionWindow>> by_subject;
};

PreparedData prepare_windows(const Manifest& manifest, int win_len, int stride) {
  PreparedData out;
  std::vector<Recording> recordings = load_recordings(manifest);
  for (auto& rec : recordings) {
    Recording norm = zscore_normalize(rec);
    std::vector<DecisionWindow> wins = make_windows(norm, win_len, stride);
    auto& list = out.by_subject[norm.subject_id];
    for (auto& w : wins) list.push_back(std::move(w));
  }
  for (const auto& kv : out.by_subject) out.subjects.push_back(kv.first);
  return out;
}

void align_in_place(std::vector<DecisionWindow>& windows, const AlignmentMatrix& matrix) {
  for (auto& w : windows) w = apply_alignment(w, matrix);
}

void write_history(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << "# epoch\ttrain_loss\tval_acc\n";
  char line[96];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\n", r.epoch, r.train_loss, r.val_acc);
    out << line;
  }
}

void write_summary(const std::string& path, const std::vector<FoldSummary>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << "# fold\tsubject\twindow_seconds\ttest_accuracy\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%d\t%s\t%.6f\t%.6f\n", r.fold, r.subject.c_str(),
                  r.window_seconds, r.test_accuracy);
    out << line;
  }
}

}  // namespace

int cmd_prep(const std::string& manifest_path, const RunConfig& config) {
  Manifest manifest = with_stage("load-manifest", [&] { return load_manifest(manifest_path); });
  with_stage("validate-manifest", [&] { validate_manifest(manifest); });
  const int win_len = window_samples(config.window_seconds, manifest.fs);
  const int stride = window_samples(config.stride_seconds, manifest.fs);
  std::filesystem::create_directories(config.out_dir);

  std::vector<Recording> recordings = load_recordings(manifest);
  std::map<std::string, std::vector<DecisionWindow>> by_subject;
  std::map<std::string, std::vector<Recording>> recs_by_subject;
  for (auto& rec : recordings) {
    Recording norm = zscore_normalize(rec);
    auto wins = make_windows(norm, win_len, stride);
    auto& list = by_subject[norm.subject_id];
    for (auto& w : wins) list.push_back(std::move(w));
    recs_by_subject[norm.subject_id].push_back(std::move(norm));
  }

  Manifest out_manifest = manifest;
  out_manifest.trials.clear();
  for (auto& [subject, wins] : by_subject) {
    if (config.align) {
      AlignmentMatrix matrix = compute_alignment(wins, subject);
      align_in_place(wins, matrix);
      std::printf("prep subject=%s windows=%zu whitening_deviation=%.3e\n", subject.c_str(),
                  wins.size(), check_alignment(wins));
      // Aligning the whole recording is equivalent to aligning each of its
      // windows: the matrix acts on channels only.
      for (auto& rec : recs_by_subject[subject]) {
        Recording aligned = rec;
        for (int r = 0; r < rec.channels; ++r)
          for (long long t = 0; t < rec.samples; ++t) {
            double acc = 0.0;
            for (int k = 0; k < rec.channels; ++k) acc += matrix.at(r, k) * rec.at(k, t);
            aligned.at(r, t) = static_cast<float>(acc);
          }
        rec = std::move(aligned);
      }
    } else {
      std::printf("prep subject=%s windows=%zu (alignment off)\n", subject.c_str(), wins.size());
    }
  }
  for (const auto& [subject, recs] : recs_by_subject) {
    for (const auto& rec : recs) {
      const std::string fname = rec.subject_id + "_" + rec.trial_id + ".eegw";
      write_recording(rec, (std::filesystem::path(config.out_dir) / fname).string());
      out_manifest.trials.push_back({rec.subject_id, rec.trial_id, fname, rec.label});
    }
  }
  save_manifest(out_manifest,
                (std::filesystem::path(config.out_dir) / "manifest.json").string());
  return 0;
}

std::vector<FoldSummary> run_training(const std::string& manifest_path, const RunConfig& config) {
  Manifest manifest = with_stage("load-manifest", [&] { return load_manifest(manifest_path); });
  with_stage("validate-manifest", [&] { validate_manifest(manifest); });
  const int win_len = window_samples(config.window_seconds, manifest.fs);
  const int stride = window_samples(config.stride_seconds, manifest.fs);
  const ModelConfig mc = config.model_config(manifest.channels, win_len);
  mc.validate();
  std::filesystem::create_directories(config.out_dir);

  PreparedData data =
      with_stage("preprocess", [&] { return prepare_windows(manifest, win_len, stride); });

  std::vector<FoldSummary> summary;
  if (config.mode == SplitMode::SubjectDependent) {
    int fold = 0;
    for (const auto& subject : data.subjects) {
      std::vector<DecisionWindow> windows = data.by_subject[subject];
      TrainConfig tc = config.train_config();
      tc.seed = config.seed + static_cast<std::uint64_t>(fold);
      SplitPlan plan =
          with_stage("split", [&] { return split_subject_dependent(windows, tc.seed); });
      if (config.align) {
        with_stage("alignment", [&] {
          std::vector<DecisionWindow> train_wins;
          for (int i : plan.train) train_wins.push_back(windows[static_cast<std::size_t>(i)]);
          AlignmentMatrix matrix = compute_alignment(train_wins, subject);
          align_in_place(windows, matrix);
        });
      }
      TrainResult result =
          with_stage("train", [&] { return train_loop(windows, plan, mc, tc); });
      const double acc = with_stage(
          "evaluate", [&] { return evaluate(result.best_params, mc, windows, plan.test); });
      write_history((std::filesystem::path(config.out_dir) /
                     ("history_fold" + std::to_string(fold) + ".tsv"))
                        .string(),
                    result.history);
      save_params(result.best_params, mc,
                  (std::filesystem::path(config.out_dir) /
                   ("params_fold" + std::to_string(fold) + ".lnp"))
                      .string());
      summary.push_back({fold, subject, config.window_seconds, acc});
      ++fold;
    }
  } else {
    // LOSO: per-subject alignment first (own windows, no labels involved),
    // then one fold per held-out subject.
    std::vector<DecisionWindow> all;
    with_stage("alignment", [&] {
      for (const auto& subject : data.subjects) {
        auto& wins = data.by_subject[subject];
        if (config.align) {
          AlignmentMatrix matrix = compute_alignment(wins, subject);
          align_in_place(wins, matrix);
        }
        for (auto& w : wins) all.push_back(w);
      }
    });
    int fold = 0;
    for (const auto& subject : data.subjects) {
      TrainConfig tc = config.train_config();
      tc.seed = config.seed + static_cast<std::uint64_t>(fold);
      SplitPlan plan = with_stage(
          "split", [&] { return split_loso(all, subject, tc.seed, tc.val_fraction_loso); });
      TrainResult result = with_stage("train", [&] { return train_loop(all, plan, mc, tc); });
      const double acc = with_stage(
          "evaluate", [&] { return evaluate(result.best_params, mc, all, plan.test); });
      write_history((std::filesystem::path(config.out_dir) /
                     ("history_fold" + std::to_string(fold) + ".tsv"))
                        .string(),
                    result.history);
      save_params(result.best_params, mc,
                  (std::filesystem::path(config.out_dir) /
                   ("params_fold" + std::to_string(fold) + ".lnp"))
                      .string());
      summary.push_back({fold, subject, config.window_seconds, acc});
      ++fold;
    }
  }
  write_summary((std::filesystem::path(config.out_dir) / "summary.tsv").string(), summary);
  return summary;
}

int cmd_train(const std::string& manifest_path, const RunConfig& config) {
  std::vector<FoldSummary> rows = run_training(manifest_path, config);
  for (const auto& r : rows)
    std::printf("fold=%d subject=%s window=%.3fs test_accuracy=%.4f\n", r.fold,
                r.subject.c_str(), r.window_seconds, r.test_accuracy);
  double mean = 0.0;
  for (const auto& r : rows) mean += r.test_accuracy;
  if (!rows.empty()) mean /= static_cast<double>(rows.size());
  std::printf("mean_test_accuracy=%.4f folds=%zu\n", mean, rows.size());
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& params_path,
             const RunConfig& config) {
  auto [params, mc] = with_stage("load-params", [&] { return load_params(params_path); });
  Manifest manifest = with_stage("load-manifest", [&] { return load_manifest(manifest_path); });
  with_stage("validate-manifest", [&] { validate_manifest(manifest); });
  if (manifest.channels != mc.channels)
    throw ConfigError("params were trained with " + std::to_string(mc.channels) +
                      " channels, manifest has " + std::to_string(manifest.channels));
  const int win_len = mc.window_len;
  const int stride = window_samples(config.stride_seconds, manifest.fs);
  PreparedData data =
      with_stage("preprocess", [&] { return prepare_windows(manifest, win_len, stride); });
  std::vector<DecisionWindow> all;
  for (const auto& subject : data.subjects) {
    auto& wins = data.by_subject[subject];
    if (config.align) {
      AlignmentMatrix matrix = compute_alignment(wins, subject);
      align_in_place(wins, matrix);
    }
    for (auto& w : wins) all.push_back(std::move(w));
  }
  std::vector<int> idx(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) idx[i] = static_cast<int>(i);
  const double acc =
      with_stage("evaluate", [&] { return evaluate(params, mc, all, idx); });
  std::printf("windows=%zu accuracy=%.4f\n", all.size(), acc);
  return 0;
}

int cmd_audit(const ModelConfig& config) {
  const long long params = count_params(config);
  const long long macs = count_macs(config);
  std::printf("params_exact=%lld\n", params);
  std::printf("params_millions=%.2f\n", static_cast<double>(params) / 1e6);
  std::printf("macs_exact=%lld\n", macs);
  std::printf("macs_millions=%.2f\n", static_cast<double>(macs) / 1e6);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  std::vector<GradCheckReport> reports = run_gradient_battery(seed, true);
  bool all_pass = true;
  for (const auto& r : reports) all_pass = all_pass && r.pass;
  std::printf("gradient battery: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 3;
}

int cmd_selftest(std::uint64_t seed) {
  bool ok = true;

  std::vector<GradCheckReport> reports = run_gradient_battery(seed, true);
  for (const auto& r : reports) ok = ok && r.pass;

  const double conv_dev = run_conv_oracle_battery(200, seed + 1, true);
  if (conv_dev > 1e-5) ok = false;

  // Alignment whitening identity on randomized correlated scopes.
  std::mt19937_64 rng(seed + 2);
  double worst = 0.0, worst_raw = 1e9;
  for (int scope = 0; scope < 5; ++scope) {
    std::vector<DecisionWindow> wins = make_correlated_scope(8, 24, 64, rng);
    worst_raw = std::min(worst_raw, check_alignment(wins));
    AlignmentMatrix m = compute_alignment(wins, "selftest");
    for (auto& w : wins) w = apply_alignment(w, m);
    worst = std::max(worst, check_alignment(wins));
  }
  std::printf("alignment whitening: max deviation %.3e, raw control %.3e\n", worst, worst_raw);
  if (worst > 1e-6 || worst_raw < 0.1) ok = false;

  std::printf("selftest: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 3;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  gen_synthetic(spec, out_dir);
  std::printf("synthetic dataset: %d subjects x %d trials, C=%d fs=%.1f -> %s\n", spec.subjects,
              spec.trials_per_subject, spec.channels, static_cast<double>(spec.fs),
              out_dir.c_str());
  return 0;
}

}  // namespace listennet
