#include "listennet/io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

namespace listennet {

namespace {

using nlohmann::json;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size())
      throw FormatError(path + ": truncated " + what + " at byte offset " + std::to_string(pos) +
                        " (have " + std::to_string(buf.size()) + " bytes)");
  }
  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void spew(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace

Recording read_recording(const std::string& path) {
  const std::string buf = slurp(path);
  Reader r{buf, 0, path};
  r.need(4, "magic");
  if (buf.compare(0, 4, "EEGW") != 0)
    throw FormatError(path + ": bad magic at byte offset 0, expected 'EEGW'");
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != 1)
    throw FormatError(path + ": unsupported format version " + std::to_string(version));
  Recording rec;
  rec.channels = static_cast<int>(r.u32());
  rec.samples = static_cast<long long>(r.u64());
  rec.fs = r.f32();
  const std::size_t expect =
      22 + 4 * static_cast<std::size_t>(rec.channels) * static_cast<std::size_t>(rec.samples);
  if (buf.size() != expect)
    throw FormatError(path + ": payload length mismatch, expected " + std::to_string(expect) +
                      " bytes, got " + std::to_string(buf.size()));
  rec.data.resize(static_cast<std::size_t>(rec.channels) * static_cast<std::size_t>(rec.samples));
  std::memcpy(rec.data.data(), buf.data() + 22, rec.data.size() * 4);
  return rec;
}

void write_recording(const Recording& rec, const std::string& path) {
  std::string out;
  out.reserve(22 + rec.data.size() * 4);
  out += "EEGW";
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(rec.channels));
  put_u64(out, static_cast<std::uint64_t>(rec.samples));
  put_f32(out, rec.fs);
  // x86 and every target here is little-endian; keep the raw copy fast path.
  const std::size_t head = out.size();
  out.resize(head + rec.data.size() * 4);
  std::memcpy(out.data() + head, rec.data.data(), rec.data.size() * 4);
  spew(path, out);
}

namespace {

Label parse_label(const std::string& s) {
  if (s == "left") return Label::Left;
  if (s == "right") return Label::Right;
  throw FormatError("label must be 'left' or 'right', got '" + s + "'");
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  Manifest m;
  m.dataset = j.value("dataset", "unnamed");
  m.fs = j.at("fs").get<float>();
  m.channels = j.at("channels").get<int>();
  for (const auto& t : j.at("trials")) {
    ManifestTrial trial;
    trial.subject_id = t.at("subject_id").get<std::string>();
    trial.trial_id = t.at("trial_id").get<std::string>();
    trial.path = t.at("path").get<std::string>();
    trial.label = parse_label(t.at("label").get<std::string>());
    m.trials.push_back(std::move(trial));
  }
  m.base_dir = std::filesystem::path(path).parent_path().string();
  return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  json j;
  j["dataset"] = manifest.dataset;
  j["fs"] = manifest.fs;
  j["channels"] = manifest.channels;
  j["trials"] = json::array();
  for (const auto& t : manifest.trials) {
    j["trials"].push_back({{"subject_id", t.subject_id},
                           {"trial_id", t.trial_id},
                           {"path", t.path},
                           {"label", t.label == Label::Left ? "left" : "right"}});
  }
  spew(path, j.dump(2) + "\n");
}

void validate_manifest(const Manifest& manifest) {
  if (manifest.channels < 1 || manifest.fs <= 0.0f)
    throw DataError("manifest channels/fs invalid");
  for (const auto& t : manifest.trials) {
    const std::string full =
        (std::filesystem::path(manifest.base_dir) / t.path).string();
    if (!std::filesystem::exists(full))
      throw DataError("manifest references missing file " + full);
    Recording rec = read_recording(full);
    if (rec.channels != manifest.channels)
      throw DataError(full + ": header channels " + std::to_string(rec.channels) +
                      " contradict manifest " + std::to_string(manifest.channels));
    if (std::abs(rec.fs - manifest.fs) > 1e-6f)
      throw DataError(full + ": header sample rate " + std::to_string(rec.fs) +
                      " contradicts manifest " + std::to_string(manifest.fs));
  }
}

std::vector<Recording> load_recordings(const Manifest& manifest) {
  std::vector<Recording> out;
  out.reserve(manifest.trials.size());
  for (const auto& t : manifest.trials) {
    const std::string full =
        (std::filesystem::path(manifest.base_dir) / t.path).string();
    Recording rec = read_recording(full);
    rec.subject_id = t.subject_id;
    rec.trial_id = t.trial_id;
    rec.label = t.label;
    out.push_back(std::move(rec));
  }
  return out;
}

Manifest gen_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.channels < 2) throw ConfigError("synthetic generator needs at least 2 channels");
  if (spec.subjects < 1 || spec.trials_per_subject < 1)
    throw ConfigError("synthetic generator needs subjects and trials >= 1");
  std::filesystem::create_directories(out_dir);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> gain_dist(0.7, 1.4);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * M_PI);
  std::normal_distribution<double> noise_dist(0.0, 1.0);

  const long long s_count = static_cast<long long>(std::llround(spec.duration_s * spec.fs));
  const double f_left = 0.10 * spec.fs;   // class-specific oscillation frequencies
  const double f_right = 0.20 * spec.fs;
  const double rho = 0.9;
  const double drive = std::sqrt(1.0 - rho * rho);  // unit-variance AR(1)

  Manifest m;
  m.dataset = "synthetic";
  m.fs = spec.fs;
  m.channels = spec.channels;

  for (int s = 0; s < spec.subjects; ++s) {
    std::vector<double> gains(static_cast<std::size_t>(spec.channels));
    for (auto& g : gains) g = gain_dist(rng);
    char subj[16];
    std::snprintf(subj, sizeof(subj), "S%02d", s + 1);
    for (int tr = 0; tr < spec.trials_per_subject; ++tr) {
      const Label label = (tr % 2 == 0) ? Label::Left : Label::Right;
      const double freq = (label == Label::Left) ? f_left : f_right;
      const int sig_lo = (label == Label::Left) ? 0 : spec.channels / 2;
      const int sig_hi = (label == Label::Left) ? spec.channels / 2 : spec.channels;

      Recording rec;
      rec.subject_id = subj;
      char trial[16];
      std::snprintf(trial, sizeof(trial), "T%02d", tr + 1);
      rec.trial_id = trial;
      rec.fs = spec.fs;
      rec.channels = spec.channels;
      rec.samples = s_count;
      rec.label = label;
      rec.data.resize(static_cast<std::size_t>(spec.channels) * s_count);
      for (int c = 0; c < spec.channels; ++c) {
        const double phase = phase_dist(rng);
        const bool carries = (c >= sig_lo && c < sig_hi);
        double ar = 0.0;
        for (long long t = 0; t < s_count; ++t) {
          ar = rho * ar + drive * noise_dist(rng);
          double v = ar;
          if (carries)
            v += spec.snr * std::sin(2.0 * M_PI * freq * static_cast<double>(t) / spec.fs + phase);
          rec.at(c, t) = static_cast<float>(gains[static_cast<std::size_t>(c)] * v);
        }
      }
      char fname[64];
      std::snprintf(fname, sizeof(fname), "s%02d_t%02d.eegw", s + 1, tr + 1);
      write_recording(rec, (std::filesystem::path(out_dir) / fname).string());
      m.trials.push_back({rec.subject_id, rec.trial_id, fname, label});
    }
  }
  const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  save_manifest(m, manifest_path);
  m.base_dir = out_dir;
  return m;
}

// ---- parameter snapshots -------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"channels", c.channels},
              {"window_len", c.window_len},
              {"d_depth", c.d_depth},
              {"k0", c.k0},
              {"mste_kernels", c.mste_kernels},
              {"dilation", c.dilation},
              {"groups", c.groups},
              {"use_mste", c.use_mste},
              {"use_cna", c.use_cna},
              {"num_classes", c.num_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.window_len = j.at("window_len").get<int>();
  c.d_depth = j.value("d_depth", 16);
  c.k0 = j.value("k0", 8);
  if (j.contains("mste_kernels")) {
    auto v = j.at("mste_kernels").get<std::vector<int>>();
    if (v.size() != 4) throw FormatError("mste_kernels must list 4 kernel widths");
    std::copy(v.begin(), v.end(), c.mste_kernels.begin());
  }
  c.dilation = j.value("dilation", 1);
  c.groups = j.value("groups", 8);
  c.use_mste = j.value("use_mste", true);
  c.use_cna = j.value("use_cna", true);
  c.num_classes = j.value("num_classes", 2);
  return c;
}

void put_entry(std::string& out, const std::string& name, const float* data, std::size_t count) {
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put_u64(out, count);
  const std::size_t head = out.size();
  out.resize(head + count * 4);
  std::memcpy(out.data() + head, data, count * 4);
}

}  // namespace

void save_params(const ListenNetParams& params, const ModelConfig& config,
                 const std::string& path) {
  std::string out;
  out += "LNPM";
  put_u16(out, 1);
  const std::string cfg = config_to_json(config).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;

  std::uint32_t count = 2;  // running stats
  params.for_each_trainable([&](const std::string&, const float*, std::size_t) { ++count; });
  put_u32(out, count);
  params.for_each_trainable([&](const std::string& name, const float* data, std::size_t n) {
    put_entry(out, name, data, n);
  });
  put_entry(out, "mste.bn.running_mean", params.mste_bn.running_mean.data(),
            params.mste_bn.running_mean.size());
  put_entry(out, "mste.bn.running_var", params.mste_bn.running_var.data(),
            params.mste_bn.running_var.size());
  spew(path, out);
}

std::pair<ListenNetParams, ModelConfig> load_params(const std::string& path) {
  const std::string buf = slurp(path);
  Reader r{buf, 0, path};
  r.need(4, "magic");
  if (buf.compare(0, 4, "LNPM") != 0) throw FormatError(path + ": bad magic, expected 'LNPM'");
  r.pos = 4;
  if (r.u16() != 1) throw FormatError(path + ": unsupported params version");
  const std::uint32_t cfg_len = r.u32();
  r.need(cfg_len, "config json");
  ModelConfig config;
  try {
    config = config_from_json(json::parse(buf.substr(r.pos, cfg_len)));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad embedded config: " + e.what());
  }
  r.pos += cfg_len;

  ListenNetParams params = zero_params<float>(config);
  std::vector<std::pair<float*, std::size_t>> slots;
  std::vector<std::string> names;
  params.for_each_trainable([&](const std::string& name, float* data, std::size_t n) {
    names.push_back(name);
    slots.push_back({data, n});
  });
  names.push_back("mste.bn.running_mean");
  slots.push_back({params.mste_bn.running_mean.data(), params.mste_bn.running_mean.size()});
  names.push_back("mste.bn.running_var");
  slots.push_back({params.mste_bn.running_var.data(), params.mste_bn.running_var.size()});

  const std::uint32_t count = r.u32();
  std::vector<bool> filled(slots.size(), false);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.u16();
    r.need(name_len, "tensor name");
    const std::string name = buf.substr(r.pos, name_len);
    r.pos += name_len;
    const std::uint64_t n = r.u64();
    r.need(n * 4, "tensor data");
    bool matched = false;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) {
        if (slots[i].second != n)
          throw FormatError(path + ": tensor '" + name + "' has " + std::to_string(n) +
                            " values, expected " + std::to_string(slots[i].second));
        std::memcpy(slots[i].first, buf.data() + r.pos, n * 4);
        filled[i] = true;
        matched = true;
        break;
      }
    }
    if (!matched) throw FormatError(path + ": unknown tensor '" + name + "'");
    r.pos += n * 4;
  }
  for (std::size_t i = 0; i < filled.size(); ++i)
    if (!filled[i]) throw FormatError(path + ": missing tensor '" + names[i] + "'");
  return {std::move(params), config};
}

}  // namespace listennet
