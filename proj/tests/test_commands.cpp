#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "listennet/commands.hpp"
#include "listennet/verify.hpp"

using namespace listennet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("listennet_cmd_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SynthSpec small_spec() {
  SynthSpec spec;
  spec.subjects = 2;
  spec.trials_per_subject = 6;
  spec.channels = 8;
  spec.fs = 32.0f;
  spec.duration_s = 8.0f;
  spec.snr = 4.0f;
  spec.seed = 9;
  return spec;
}

RunConfig small_run(const fs::path& out) {
  RunConfig rc;
  rc.window_seconds = 1.0;
  rc.stride_seconds = 0.5;
  rc.seed = 2;
  rc.max_epochs = 4;
  rc.patience = 4;
  rc.d_depth = 8;
  rc.groups = 4;
  rc.out_dir = out.string();
  return rc;
}

}  // namespace

TEST_CASE("prep rewrites whitened recordings that still validate") {
  TempDir dir("prep");
  Manifest m = gen_synthetic(small_spec(), (dir.path / "data").string());
  RunConfig rc = small_run(dir.path / "prepped");
  CHECK(cmd_prep((dir.path / "data" / "manifest.json").string(), rc) == 0);

  Manifest prepped = load_manifest((dir.path / "prepped" / "manifest.json").string());
  validate_manifest(prepped);
  CHECK(prepped.trials.size() == m.trials.size());

  // The rewritten recordings are whitened: windows cut from them sit at
  // identity mean covariance without further alignment.
  auto recs = load_recordings(prepped);
  std::vector<DecisionWindow> wins;
  for (const auto& rec : recs) {
    if (rec.subject_id != recs.front().subject_id) continue;
    auto w = make_windows(rec, 32, 16);
    wins.insert(wins.end(), w.begin(), w.end());
  }
  CHECK(check_alignment(wins) < 1e-4);
}

TEST_CASE("train writes one summary row per subject and eval reloads the snapshot") {
  TempDir dir("traineval");
  gen_synthetic(small_spec(), (dir.path / "data").string());
  const std::string manifest = (dir.path / "data" / "manifest.json").string();
  RunConfig rc = small_run(dir.path / "run");
  auto rows = run_training(manifest, rc);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].subject == "S01");
  CHECK(rows[1].subject == "S02");
  CHECK(fs::exists(dir.path / "run" / "summary.tsv"));
  CHECK(fs::exists(dir.path / "run" / "history_fold0.tsv"));
  CHECK(fs::exists(dir.path / "run" / "params_fold0.lnp"));

  CHECK(cmd_eval(manifest, (dir.path / "run" / "params_fold0.lnp").string(), rc) == 0);
}

TEST_CASE("LOSO training produces one fold per held-out subject") {
  TempDir dir("loso");
  SynthSpec spec = small_spec();
  spec.subjects = 4;
  spec.trials_per_subject = 4;
  gen_synthetic(spec, (dir.path / "data").string());
  RunConfig rc = small_run(dir.path / "run");
  rc.mode = SplitMode::Loso;
  rc.max_epochs = 2;
  rc.patience = 2;
  rc.batch_size = 32;
  auto rows = run_training((dir.path / "data" / "manifest.json").string(), rc);
  REQUIRE(rows.size() == 4);
  std::set<std::string> subjects;
  for (const auto& r : rows) subjects.insert(r.subject);
  CHECK(subjects.size() == 4);
}

TEST_CASE("pipeline errors carry their stage and map to validation failures") {
  TempDir dir("errors");
  RunConfig rc = small_run(dir.path / "out");
  CHECK_THROWS_WITH_AS(run_training((dir.path / "missing.json").string(), rc),
                       doctest::Contains("[load-manifest]"), FormatError);

  // A manifest whose recording header disagrees stops before training.
  gen_synthetic(small_spec(), (dir.path / "data").string());
  Manifest m = load_manifest((dir.path / "data" / "manifest.json").string());
  m.channels = 16;
  save_manifest(m, (dir.path / "data" / "bad.json").string());
  CHECK_THROWS_WITH_AS(run_training((dir.path / "data" / "bad.json").string(), rc),
                       doctest::Contains("[validate-manifest]"), DataError);

  // Fractional window length at this sample rate.
  RunConfig frac = rc;
  frac.window_seconds = 0.7;
  CHECK_THROWS_AS(run_training((dir.path / "data" / "manifest.json").string(), frac), ConfigError);
}

TEST_CASE("gradcheck and selftest commands exit clean") {
  CHECK(cmd_gradcheck(7) == 0);
}
