#pragma once

// Synthetic echo scenes: near-end speech, far-end reference, echo through a
// loudspeaker nonlinearity and a room impulse response, and sensor noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfaes/waveform.hpp"

namespace mfaes {

/// splitmix64 finalizer; gives independent RNG streams from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double energy(const std::vector<double>& x, std::size_t begin = 0, std::size_t end = SIZE_MAX) {
  end = std::min(end, x.size());
  double e = 0.0;
  for (std::size_t i = begin; i < end; ++i) e += x[i] * x[i];
  return e;
}

inline double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

// ---------------------------------------------------------------------------
// Room impulse responses

/// Exponentially decaying Gaussian tail behind a unit direct-path tap,
/// normalized to unit energy. The envelope falls by 60 dB after t60.
inline std::vector<double> synth_rir(double t60_ms, int len_samples, std::uint64_t seed,
                                     int sample_rate = kDefaultSampleRate) {
  if (!(t60_ms > 0.0) || len_samples < 1) throw std::invalid_argument("synth_rir: nonpositive parameters");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double decay_samples = t60_ms * sample_rate / 1000.0;
  std::vector<double> h(static_cast<std::size_t>(len_samples));
  h[0] = 1.0;
  for (int n = 1; n < len_samples; ++n) h[n] = gauss(rng) * std::exp(-n * std::log(1000.0) / decay_samples);
  const double norm = std::sqrt(energy(h));
  for (double& v : h) v /= norm;
  return h;
}

inline std::vector<double> load_rir(const std::string& path, int sample_rate = kDefaultSampleRate) {
  Waveform w = read_wav(path);
  require_rate(w, sample_rate);
  if (energy(w.samples) == 0.0) throw std::runtime_error("load_rir: silent impulse response: " + path);
  return std::move(w.samples);
}

/// Causal linear convolution truncated to x's length.
inline std::vector<double> convolve_truncated(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t taps = std::min(h.size(), n + 1);
    double acc = 0.0;
    for (std::size_t j = 0; j < taps; ++j) acc += h[j] * x[n - j];
    y[n] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Loudspeaker nonlinearity: hard clip followed by an asymmetric sigmoid.

struct NonlinearityParams {
  bool enabled = true;
  double clip_ratio = 0.8;  // clip level relative to max |x|
  double gain = 1.0;        // output bound
};

inline double sigmoid_stage(double xc, double gain) {
  const double b = 1.5 * xc - 0.3 * xc * xc;
  const double a = b > 0.0 ? 4.0 : 0.5;
  return gain * (2.0 / (1.0 + std::exp(-a * b)) - 1.0);
}

inline Waveform apply_nonlinearity(const Waveform& x, const NonlinearityParams& p = {}) {
  validate(x);
  double peak = 0.0;
  for (double v : x.samples) peak = std::max(peak, std::abs(v));
  const double c = p.clip_ratio * peak;
  Waveform out{std::vector<double>(x.size(), 0.0), x.sample_rate};
  if (c == 0.0) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = sigmoid_stage(std::clamp(x.samples[i], -c, c), p.gain);
  return out;
}

// ---------------------------------------------------------------------------
// Scenes

struct RirSource {
  double t60_ms = 250.0;
  int len_samples = 2048;
  std::string path;  // non-empty: load this WAV instead of synthesizing
};

struct SceneConfig {
  double ser_db = 0.0;
  double snr_db = 30.0;
  double far_len_s = 4.0;
  double near_len_s = 2.0;
  NonlinearityParams nonlinearity;
  RirSource rir;
  std::uint64_t seed = 0;
  double peak_limit = 0.9;  // components are jointly rescaled if any exceeds this
};

struct Scene {
  Waveform near;   // s(n), zero-padded to the scene length
  Waveform far;    // x(n), loudspeaker reference
  Waveform echo;   // d(n)
  Waveform noise;  // v(n)
  Waveform mic;    // y(n) = s + d + v
  std::size_t near_begin = 0;
  std::size_t near_end = 0;

  std::size_t size() const { return mic.size(); }
  int sample_rate() const { return mic.sample_rate; }
};

inline Waveform mix(const Waveform& s, const Waveform& d, const Waveform& v) {
  Waveform y{std::vector<double>(s.size()), s.sample_rate};
  for (std::size_t i = 0; i < s.size(); ++i) y.samples[i] = s.samples[i] + d.samples[i] + v.samples[i];
  return y;
}

/// Achieved ratios, measured over the near-end support.
inline double measured_ser_db(const Scene& sc) {
  return 10.0 * std::log10(energy(sc.near.samples, sc.near_begin, sc.near_end) /
                           energy(sc.echo.samples, sc.near_begin, sc.near_end));
}
inline double measured_snr_db(const Scene& sc) {
  return 10.0 * std::log10(energy(sc.near.samples, sc.near_begin, sc.near_end) /
                           energy(sc.noise.samples, sc.near_begin, sc.near_end));
}

/// Near-end is centred in the far-end span. Components are stored
/// float32-representable so scenes survive a WAV round trip unchanged.
inline Scene make_scene(const Waveform& near, const Waveform& far, const SceneConfig& cfg) {
  validate(near);
  validate(far);
  if (near.sample_rate != far.sample_rate) throw std::invalid_argument("make_scene: sample rates differ");
  if (cfg.far_len_s < cfg.near_len_s) throw std::invalid_argument("make_scene: far_len_s < near_len_s");
  if (near.size() > far.size()) throw std::invalid_argument("make_scene: near-end longer than far-end");
  if (near.empty()) throw std::invalid_argument("make_scene: empty near-end");

  const int fs = far.sample_rate;
  const std::size_t n = far.size();

  Scene sc;
  sc.near_begin = (n - near.size()) / 2;
  sc.near_end = sc.near_begin + near.size();

  std::vector<double> s(n, 0.0);
  std::copy(near.samples.begin(), near.samples.end(), s.begin() + static_cast<std::ptrdiff_t>(sc.near_begin));

  const Waveform driven = cfg.nonlinearity.enabled ? apply_nonlinearity(far, cfg.nonlinearity) : far;
  const std::vector<double> rir = cfg.rir.path.empty()
                                      ? synth_rir(cfg.rir.t60_ms, cfg.rir.len_samples, derive_seed(cfg.seed, 1), fs)
                                      : load_rir(cfg.rir.path, fs);
  std::vector<double> d = convolve_truncated(driven.samples, rir);

  const double es = energy(s, sc.near_begin, sc.near_end);
  const double ed = energy(d, sc.near_begin, sc.near_end);
  if (es == 0.0) throw std::invalid_argument("make_scene: silent near-end, SER undefined");
  if (ed == 0.0) throw std::invalid_argument("make_scene: silent echo, SER undefined");
  const double echo_gain = std::sqrt(es / (ed * std::pow(10.0, cfg.ser_db / 10.0)));
  for (double& v : d) v *= echo_gain;

  std::mt19937_64 rng(derive_seed(cfg.seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = gauss(rng);
  const double ev = energy(v, sc.near_begin, sc.near_end);
  const double noise_gain = std::sqrt(es / (ev * std::pow(10.0, cfg.snr_db / 10.0)));
  for (double& x : v) x *= noise_gain;

  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    peak = std::max({peak, std::abs(s[i]), std::abs(d[i]), std::abs(v[i]), std::abs(s[i] + d[i] + v[i])});
  const double scale = peak > cfg.peak_limit ? cfg.peak_limit / peak : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = round_to_float(s[i] * scale);
    d[i] = round_to_float(d[i] * scale);
    v[i] = round_to_float(v[i] * scale);
  }

  sc.near = {std::move(s), fs};
  sc.far = far;
  for (double& x : sc.far.samples) x = round_to_float(x);
  sc.echo = {std::move(d), fs};
  sc.noise = {std::move(v), fs};
  sc.mic = mix(sc.near, sc.echo, sc.noise);
  return sc;
}

// ---------------------------------------------------------------------------
// Clip providers

class ClipProvider {
 public:
  virtual ~ClipProvider() = default;
  /// A clip of exactly `num_samples`, fully determined by `seed`.
  virtual Waveform clip(std::uint64_t seed, std::size_t num_samples) const = 0;
};

/// Speech-like test signal: syllables of harmonic voicing with a drifting
/// pitch, shaped by three formant resonances, interleaved with fricative
/// noise bursts and pauses.
class SyntheticSpeechProvider : public ClipProvider {
 public:
  explicit SyntheticSpeechProvider(int sample_rate = kDefaultSampleRate, double rms = 0.05)
      : fs_(sample_rate), rms_(rms) {}

  Waveform clip(std::uint64_t seed, std::size_t num_samples) const override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> out(num_samples, 0.0);
    const double speaker_f0 = range(90.0, 220.0);
    std::size_t pos = static_cast<std::size_t>(range(0.0, 0.05) * fs_);
    while (pos < num_samples) {
      const auto len = static_cast<std::size_t>(range(0.10, 0.30) * fs_);
      const std::size_t end = std::min(num_samples, pos + len);
      if (uni(rng) < 0.8)
        voiced(out, pos, end, speaker_f0 * range(0.85, 1.2), rng);
      else
        fricative(out, pos, end, rng, gauss);
      pos = end + static_cast<std::size_t>((uni(rng) < 0.3 ? range(0.05, 0.20) : range(0.0, 0.03)) * fs_);
    }

    const double e = energy(out);
    if (e > 0.0) {
      const double g = rms_ / std::sqrt(e / static_cast<double>(num_samples));
      for (double& v : out) v *= g;
    }
    return {std::move(out), fs_};
  }

 private:
  void voiced(std::vector<double>& out, std::size_t begin, std::size_t end, double f0, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double formants[3] = {300.0 + 600.0 * uni(rng), 900.0 + 1600.0 * uni(rng), 2500.0 + 1000.0 * uni(rng)};
    const double widths[3] = {90.0, 140.0, 200.0};
    const double drift = (uni(rng) - 0.5) * 0.3;  // relative pitch glide over the syllable
    const double n = static_cast<double>(end - begin);
    const int harmonics = static_cast<int>(4000.0 / f0);
    for (int h = 1; h <= harmonics; ++h) {
      double amp = 0.0;
      for (int f = 0; f < 3; ++f) {
        const double dev = (h * f0 - formants[f]) / widths[f];
        amp += std::exp(-0.5 * dev * dev) / (f + 1);
      }
      amp = (amp + 0.02) / h;
      double phase = 2.0 * std::numbers::pi * uni(rng);
      for (std::size_t i = begin; i < end; ++i) {
        const double t = static_cast<double>(i - begin) / n;
        const double env = std::sin(std::numbers::pi * t);
        phase += 2.0 * std::numbers::pi * h * f0 * (1.0 + drift * t) / fs_;
        out[i] += amp * env * std::sin(phase);
      }
    }
  }

  void fricative(std::vector<double>& out, std::size_t begin, std::size_t end, std::mt19937_64& rng,
                 std::normal_distribution<double>& gauss) const {
    const double n = static_cast<double>(end - begin);
    double prev = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double t = static_cast<double>(i - begin) / n;
      const double white = gauss(rng);
      const double hp = white - prev;  // first-difference high-pass
      prev = white;
      out[i] += 0.05 * std::sin(std::numbers::pi * t) * hp;
    }
  }

  int fs_;
  double rms_;
};

/// Picks a file and an offset per seed; short files are tiled.
class WavDirectoryProvider : public ClipProvider {
 public:
  explicit WavDirectoryProvider(const std::string& dir, int sample_rate = kDefaultSampleRate) : fs_(sample_rate) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("clip directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files_.push_back(entry.path().string());
    std::sort(files_.begin(), files_.end());
    if (files_.empty()) throw std::runtime_error("clip directory has no .wav files: " + dir);
  }

  Waveform clip(std::uint64_t seed, std::size_t num_samples) const override {
    std::mt19937_64 rng(seed);
    const auto& path = files_[std::uniform_int_distribution<std::size_t>(0, files_.size() - 1)(rng)];
    Waveform src = read_wav(path);
    require_rate(src, fs_);
    if (src.empty()) throw std::runtime_error("empty clip: " + path);
    std::size_t offset = 0;
    if (src.size() > num_samples)
      offset = std::uniform_int_distribution<std::size_t>(0, src.size() - num_samples)(rng);
    std::vector<double> out(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) out[i] = src.samples[(offset + i) % src.size()];
    return {std::move(out), fs_};
  }

  std::size_t size() const { return files_.size(); }

 private:
  int fs_;
  std::vector<std::string> files_;
};

}  // namespace mfaes
