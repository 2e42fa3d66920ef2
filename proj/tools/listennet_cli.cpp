// Command-line front end: synth, prep, train, eval, audit, gradcheck, selftest.
// A JSON run config may supply every option; explicit flags override it.
// Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 selftest failure.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "listennet/commands.hpp"

namespace {

using namespace listennet;

void add_run_config_flags(CLI::App* cmd, RunConfig& config, std::string& mode) {
  cmd->add_option("--config", [&config](const std::vector<std::string>& v) {
       config = load_run_config(v.front());
       return true;
     },
     "JSON run config; explicit flags override its values")
      ->expected(1);
  cmd->add_option("--mode", mode, "split protocol: sd | loso")->check(CLI::IsMember({"sd", "loso"}));
  cmd->add_option("--window", config.window_seconds, "decision window length in seconds");
  cmd->add_option("--stride", config.stride_seconds, "window stride in seconds");
  cmd->add_flag("--align,!--no-align", config.align, "toggle Euclidean alignment (default on)");
  cmd->add_option("--seed", config.seed, "run seed");
  cmd->add_option("--out", config.out_dir, "output directory");
  cmd->add_option("--d-depth", config.d_depth, "feature depth");
  cmd->add_option("--k0", config.k0, "temporal kernel width");
  cmd->add_option("--dilation", config.dilation, "dilation factor for the multi-scale kernels");
  cmd->add_option("--groups", config.groups, "attention group count");
  cmd->add_flag("--no-mste", [&config](std::int64_t) { config.use_mste = false; },
                "disable the multi-scale temporal module");
  cmd->add_flag("--no-cna", [&config](std::int64_t) { config.use_cna = false; },
                "disable the cross-nested attention module");
  cmd->add_option("--lr", config.learning_rate, "learning rate (default per mode)");
  cmd->add_option("--weight-decay", config.weight_decay, "L2 weight decay");
  cmd->add_option("--batch", config.batch_size, "batch size (default per mode)");
  cmd->add_option("--epochs", config.max_epochs, "maximum epochs");
  cmd->add_option("--patience", config.patience, "early-stopping patience in epochs");
  cmd->add_option("--val-fraction", config.val_fraction_loso,
                  "validation fraction carved from LOSO training windows");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG auditory-attention decoding engine"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth_spec;
  std::string synth_out = "synthetic";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--subjects", synth_spec.subjects, "subject count");
  synth->add_option("--trials", synth_spec.trials_per_subject, "trials per subject");
  synth->add_option("--channels", synth_spec.channels, "channel count");
  synth->add_option("--fs", synth_spec.fs, "sample rate in Hz");
  synth->add_option("--duration", synth_spec.duration_s, "trial duration in seconds");
  synth->add_option("--snr", synth_spec.snr, "oscillation amplitude relative to noise");
  synth->add_option("--seed", synth_spec.seed, "generator seed");

  RunConfig run_config;
  std::string mode_str;

  CLI::App* prep = app.add_subcommand("prep", "normalize, align, and rewrite recordings");
  std::string prep_manifest;
  prep->add_option("manifest", prep_manifest, "input manifest.json")->required();
  add_run_config_flags(prep, run_config, mode_str);

  CLI::App* train = app.add_subcommand("train", "train and evaluate per the split protocol");
  std::string train_manifest;
  train->add_option("manifest", train_manifest, "input manifest.json")->required();
  add_run_config_flags(train, run_config, mode_str);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved parameter snapshot");
  std::string eval_manifest, eval_params;
  eval->add_option("manifest", eval_manifest, "input manifest.json")->required();
  eval->add_option("params", eval_params, "trained parameter snapshot (.lnp)")->required();
  add_run_config_flags(eval, run_config, mode_str);

  CLI::App* audit = app.add_subcommand("audit", "parameter and MAC accounting");
  int audit_channels = 64;
  int audit_window = 128;
  audit->add_option("--channels", audit_channels, "channel count");
  audit->add_option("--window-samples", audit_window, "window length in samples");
  bool audit_no_mste = false, audit_no_cna = false;
  audit->add_flag("--no-mste", audit_no_mste, "exclude the multi-scale module from MACs");
  audit->add_flag("--no-cna", audit_no_cna, "exclude the attention module from MACs");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient battery");
  std::uint64_t check_seed = 7;
  gradcheck->add_option("--seed", check_seed, "battery seed");

  CLI::App* selftest =
      app.add_subcommand("selftest", "gradient battery plus conv and alignment oracles");
  selftest->add_option("--seed", check_seed, "battery seed");

  CLI11_PARSE(app, argc, argv);
  if (!mode_str.empty())
    run_config.mode = (mode_str == "loso") ? SplitMode::Loso : SplitMode::SubjectDependent;

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
    if (prep->parsed()) return cmd_prep(prep_manifest, run_config);
    if (train->parsed()) return cmd_train(train_manifest, run_config);
    if (eval->parsed()) return cmd_eval(eval_manifest, eval_params, run_config);
    if (audit->parsed()) {
      ModelConfig mc = run_config.model_config(audit_channels, audit_window);
      mc.use_mste = !audit_no_mste;
      mc.use_cna = !audit_no_cna;
      return cmd_audit(mc);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(check_seed);
    if (selftest->parsed()) return cmd_selftest(check_seed);
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
