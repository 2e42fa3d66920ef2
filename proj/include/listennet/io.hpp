#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "listennet/model.hpp"
#include "listennet/preprocess.hpp"

namespace listennet {

// Recording container, binary layout:
//   "EEGW" magic (4 bytes), u16 version = 1, u32 channels, u64 samples,
//   f32 sample rate, then channels*samples little-endian f32, channel-major.
// Header is 22 bytes; payload must be exactly 4*C*S bytes.
Recording read_recording(const std::string& path);
void write_recording(const Recording& rec, const std::string& path);

struct ManifestTrial {
  std::string subject_id;
  std::string trial_id;
  std::string path;  // relative to the manifest file
  Label label = Label::Left;
};

struct Manifest {
  std::string dataset;
  float fs = 0.0f;
  int channels = 0;
  std::vector<ManifestTrial> trials;
  std::string base_dir;  // set on load
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

// Rejects any referenced file that is missing or whose header contradicts the
// manifest's channel count / sample rate.
void validate_manifest(const Manifest& manifest);

// Loads every trial as a labeled Recording.
std::vector<Recording> load_recordings(const Manifest& manifest);

struct SynthSpec {
  int subjects = 4;
  int trials_per_subject = 8;
  int channels = 16;
  float fs = 64.0f;
  float duration_s = 20.0f;
  float snr = 4.0f;
  std::uint64_t seed = 0;
};

// Two classes differ by which half of the channels carries a class-specific
// oscillation (distinct frequencies) on top of shared AR(1) pink-like noise;
// per-subject channel gains simulate inter-subject variability.
Manifest gen_synthetic(const SynthSpec& spec, const std::string& out_dir);

// Trained parameter snapshot (trainables plus batch-norm running stats) with
// the model config embedded, so evaluation can rebuild the network.
void save_params(const ListenNetParams& params, const ModelConfig& config,
                 const std::string& path);
std::pair<ListenNetParams, ModelConfig> load_params(const std::string& path);

}  // namespace listennet
