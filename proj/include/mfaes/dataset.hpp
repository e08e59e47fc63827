#pragma once

// Scene datasets on disk: a JSON-lines manifest plus per-scene WAV files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfaes/scene.hpp"

namespace mfaes {

struct DatasetConfig {
  int n_scenes = 10;
  double ser_min = -20.0, ser_max = 10.0;
  double snr_min = 10.0, snr_max = 40.0;
  /// When non-empty, scenes cycle through these SER values and the SNR is
  /// fixed at snr_fixed (evaluation grids).
  std::vector<double> ser_conditions;
  double snr_fixed = 30.0;
  double t60_min_ms = 150.0, t60_max_ms = 400.0;
  int rir_len = 2048;
  std::string rir_path;
  double far_len_s = 4.0;
  double near_len_s = 2.0;
  NonlinearityParams nonlinearity;
  std::string clip_dir;  // empty: synthetic speech
  std::uint64_t seed = 1;
  int sample_rate = kDefaultSampleRate;
};

inline nlohmann::json to_json(const DatasetConfig& c) {
  return {{"n_scenes", c.n_scenes},
          {"ser_min", c.ser_min},
          {"ser_max", c.ser_max},
          {"snr_min", c.snr_min},
          {"snr_max", c.snr_max},
          {"ser_conditions", c.ser_conditions},
          {"snr_fixed", c.snr_fixed},
          {"t60_min_ms", c.t60_min_ms},
          {"t60_max_ms", c.t60_max_ms},
          {"rir_len", c.rir_len},
          {"rir_path", c.rir_path},
          {"far_len_s", c.far_len_s},
          {"near_len_s", c.near_len_s},
          {"nonlinearity", {{"enabled", c.nonlinearity.enabled}, {"clip_ratio", c.nonlinearity.clip_ratio}, {"gain", c.nonlinearity.gain}}},
          {"clip_dir", c.clip_dir},
          {"seed", c.seed},
          {"sample_rate", c.sample_rate}};
}

/// Missing keys keep the values already in `c`.
inline void merge_json(DatasetConfig& c, const nlohmann::json& j) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_scenes", c.n_scenes);
  get("ser_min", c.ser_min);
  get("ser_max", c.ser_max);
  get("snr_min", c.snr_min);
  get("snr_max", c.snr_max);
  get("ser_conditions", c.ser_conditions);
  get("snr_fixed", c.snr_fixed);
  get("t60_min_ms", c.t60_min_ms);
  get("t60_max_ms", c.t60_max_ms);
  get("rir_len", c.rir_len);
  get("rir_path", c.rir_path);
  get("far_len_s", c.far_len_s);
  get("near_len_s", c.near_len_s);
  get("clip_dir", c.clip_dir);
  get("seed", c.seed);
  get("sample_rate", c.sample_rate);
  if (j.contains("nonlinearity")) {
    const auto& nl = j.at("nonlinearity");
    if (nl.contains("enabled")) c.nonlinearity.enabled = nl.at("enabled").get<bool>();
    if (nl.contains("clip_ratio")) c.nonlinearity.clip_ratio = nl.at("clip_ratio").get<double>();
    if (nl.contains("gain")) c.nonlinearity.gain = nl.at("gain").get<double>();
  }
}

inline void validate(const DatasetConfig& c) {
  if (c.n_scenes < 1) throw std::invalid_argument("dataset: n_scenes must be >= 1");
  if (c.ser_min > c.ser_max) throw std::invalid_argument("dataset: ser_min > ser_max");
  if (c.snr_min > c.snr_max) throw std::invalid_argument("dataset: snr_min > snr_max");
  if (!(c.t60_min_ms > 0.0) || c.t60_min_ms > c.t60_max_ms) throw std::invalid_argument("dataset: invalid t60 range");
  if (c.rir_len < 1) throw std::invalid_argument("dataset: rir_len must be >= 1");
  if (c.far_len_s < c.near_len_s || !(c.near_len_s > 0.0)) throw std::invalid_argument("dataset: invalid clip lengths");
}

/// One manifest line. Paths are relative to the dataset directory.
struct SceneRecord {
  int index = 0;
  std::uint64_t seed = 0;
  double ser_db = 0.0;
  double snr_db = 0.0;
  double t60_ms = 0.0;
  std::string near, far, echo, noise, mic;
};

inline nlohmann::json to_json(const SceneRecord& r) {
  return {{"index", r.index}, {"seed", r.seed}, {"ser_db", r.ser_db}, {"snr_db", r.snr_db}, {"t60_ms", r.t60_ms},
          {"near", r.near},   {"far", r.far},   {"echo", r.echo},     {"noise", r.noise},   {"mic", r.mic}};
}

inline SceneRecord record_from_json(const nlohmann::json& j) {
  SceneRecord r;
  r.index = j.at("index").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ser_db = j.at("ser_db").get<double>();
  r.snr_db = j.at("snr_db").get<double>();
  r.t60_ms = j.at("t60_ms").get<double>();
  r.near = j.at("near").get<std::string>();
  r.far = j.at("far").get<std::string>();
  r.echo = j.at("echo").get<std::string>();
  r.noise = j.at("noise").get<std::string>();
  r.mic = j.at("mic").get<std::string>();
  return r;
}

inline std::unique_ptr<ClipProvider> make_provider(const DatasetConfig& c) {
  if (c.clip_dir.empty()) return std::make_unique<SyntheticSpeechProvider>(c.sample_rate);
  return std::make_unique<WavDirectoryProvider>(c.clip_dir, c.sample_rate);
}

/// Draws the per-scene seeds and conditions without rendering audio.
inline std::vector<SceneRecord> draw_records(const DatasetConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<SceneRecord> recs;
  for (int i = 0; i < c.n_scenes; ++i) {
    SceneRecord r;
    r.index = i;
    r.seed = rng();
    if (c.ser_conditions.empty()) {
      r.ser_db = c.ser_min + (c.ser_max - c.ser_min) * uni(rng);
      r.snr_db = c.snr_min + (c.snr_max - c.snr_min) * uni(rng);
    } else {
      r.ser_db = c.ser_conditions[static_cast<std::size_t>(i) % c.ser_conditions.size()];
      r.snr_db = c.snr_fixed;
    }
    r.t60_ms = c.t60_min_ms + (c.t60_max_ms - c.t60_min_ms) * uni(rng);
    char dir[32];
    std::snprintf(dir, sizeof dir, "scene_%05d/", i);
    r.near = std::string(dir) + "near.wav";
    r.far = std::string(dir) + "far.wav";
    r.echo = std::string(dir) + "echo.wav";
    r.noise = std::string(dir) + "noise.wav";
    r.mic = std::string(dir) + "mic.wav";
    recs.push_back(std::move(r));
  }
  return recs;
}

/// Renders one scene from its record; identical on every call.
inline Scene render_scene(const SceneRecord& r, const DatasetConfig& c, const ClipProvider& provider) {
  const auto near_n = static_cast<std::size_t>(std::llround(c.near_len_s * c.sample_rate));
  const auto far_n = static_cast<std::size_t>(std::llround(c.far_len_s * c.sample_rate));
  SceneConfig sc;
  sc.ser_db = r.ser_db;
  sc.snr_db = r.snr_db;
  sc.far_len_s = c.far_len_s;
  sc.near_len_s = c.near_len_s;
  sc.nonlinearity = c.nonlinearity;
  sc.rir = {r.t60_ms, c.rir_len, c.rir_path};
  sc.seed = derive_seed(r.seed, 3);
  const Waveform near = provider.clip(derive_seed(r.seed, 1), near_n);
  const Waveform far = provider.clip(derive_seed(r.seed, 2), far_n);
  return make_scene(near, far, sc);
}

inline std::string manifest_line(const SceneRecord& r) { return to_json(r).dump(); }

inline void write_manifest(const std::string& path, const std::vector<SceneRecord>& recs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& r : recs) os << manifest_line(r) << '\n';
}

inline std::vector<SceneRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest: " + path);
  std::vector<SceneRecord> recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    recs.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  if (recs.empty()) throw std::runtime_error("manifest is empty: " + path);
  return recs;
}

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kDatasetConfigName = "dataset.json";

/// Writes manifest.jsonl, dataset.json and scene_NNNNN/{near,far,echo,noise,mic}.wav.
inline std::vector<SceneRecord> make_dataset(const DatasetConfig& c, const std::string& out_dir) {
  namespace fs = std::filesystem;
  auto provider = make_provider(c);
  auto recs = draw_records(c);
  fs::create_directories(out_dir);
  for (const auto& r : recs) {
    const Scene sc = render_scene(r, c, *provider);
    fs::create_directories(fs::path(out_dir) / fs::path(r.near).parent_path());
    write_wav((fs::path(out_dir) / r.near).string(), sc.near);
    write_wav((fs::path(out_dir) / r.far).string(), sc.far);
    write_wav((fs::path(out_dir) / r.echo).string(), sc.echo);
    write_wav((fs::path(out_dir) / r.noise).string(), sc.noise);
    Waveform mic = sc.mic;
    for (double& v : mic.samples) v = std::clamp(v, -1.0, 1.0);
    write_wav((fs::path(out_dir) / r.mic).string(), mic);
  }
  write_manifest((fs::path(out_dir) / kManifestName).string(), recs);
  std::ofstream((fs::path(out_dir) / kDatasetConfigName).string()) << to_json(c).dump(2) << '\n';
  return recs;
}

inline DatasetConfig read_dataset_config(const std::string& dir) {
  const auto path = (std::filesystem::path(dir) / kDatasetConfigName).string();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset config: " + path);
  DatasetConfig c;
  merge_json(c, nlohmann::json::parse(in));
  return c;
}

/// Loads the stored components; the microphone signal is re-mixed from them
/// so that mic == near + echo + noise holds exactly.
inline Scene load_scene(const SceneRecord& r, const std::string& dir, const DatasetConfig& c) {
  namespace fs = std::filesystem;
  auto load = [&](const std::string& rel) { return read_wav((fs::path(dir) / rel).string()); };
  Scene sc;
  sc.near = load(r.near);
  sc.far = load(r.far);
  sc.echo = load(r.echo);
  sc.noise = load(r.noise);
  if (sc.far.size() != sc.near.size() || sc.echo.size() != sc.near.size() || sc.noise.size() != sc.near.size())
    throw std::runtime_error("scene components differ in length: " + r.near);
  sc.mic = mix(sc.near, sc.echo, sc.noise);
  const auto near_n = static_cast<std::size_t>(std::llround(c.near_len_s * c.sample_rate));
  sc.near_begin = (sc.size() - std::min(near_n, sc.size())) / 2;
  sc.near_end = sc.near_begin + std::min(near_n, sc.size());
  return sc;
}

}  // namespace mfaes
