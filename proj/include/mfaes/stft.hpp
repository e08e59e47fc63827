#pragma once

// One-sided STFT analysis and weighted overlap-add synthesis.
//
// Synthesis divides by the overlap-added squared window, so any window/hop
// pair with a nonvanishing envelope reconstructs exactly in the interior.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mfaes/waveform.hpp"

namespace mfaes {

using cplx = std::complex<double>;

enum class WindowKind { Hann, Rectangular };

struct StftConfig {
  int frame_len = 128;
  int hop = 64;
  int fft_size = 128;
  WindowKind window = WindowKind::Hann;

  int bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (frame_len < 1 || hop < 1 || fft_size < 1) throw std::invalid_argument("stft: sizes must be positive");
    if (frame_len % hop != 0) throw std::invalid_argument("stft: hop must divide frame_len");
    if (fft_size < frame_len) throw std::invalid_argument("stft: fft_size must be >= frame_len");
    if (fft_size % 2 != 0) throw std::invalid_argument("stft: fft_size must be even");
  }

  /// 8 ms frames, 4 ms hop, 128-point transform at 16 kHz.
  static StftConfig standard() { return {}; }
  /// 20 ms frames, 10 ms stride, 320-point transform (mask baseline).
  static StftConfig baseline() { return {320, 160, 320, WindowKind::Hann}; }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

/// Periodic (DFT-even) window.
inline std::vector<double> make_window(WindowKind kind, int n) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (kind == WindowKind::Hann)
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
  return w;
}

/// K x M complex array, stored frame-major: element (k, m) at m * K + k.
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(StftConfig cfg, int frames)
      : cfg_(cfg), frames_(frames), data_(static_cast<std::size_t>(cfg.bins()) * frames) {}

  const StftConfig& config() const { return cfg_; }
  int bins() const { return cfg_.bins(); }
  int frames() const { return frames_; }

  cplx& operator()(int k, int m) { return data_[static_cast<std::size_t>(m) * bins() + k]; }
  const cplx& operator()(int k, int m) const { return data_[static_cast<std::size_t>(m) * bins() + k]; }

  cplx* frame(int m) { return data_.data() + static_cast<std::size_t>(m) * bins(); }
  const cplx* frame(int m) const { return data_.data() + static_cast<std::size_t>(m) * bins(); }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

 private:
  StftConfig cfg_;
  int frames_ = 0;
  std::vector<cplx> data_;
};

inline int frame_count(std::size_t num_samples, const StftConfig& cfg) {
  if (num_samples < static_cast<std::size_t>(cfg.frame_len)) return 0;
  return static_cast<int>((num_samples - cfg.frame_len) / cfg.hop) + 1;
}

inline std::size_t synthesis_length(int frames, const StftConfig& cfg) {
  return frames == 0 ? 0 : static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.frame_len;
}

inline Spectrogram analyze(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const int frames = frame_count(w.size(), cfg);
  if (frames == 0) throw std::invalid_argument("stft: signal shorter than one frame");

  const auto window = make_window(cfg.window, cfg.frame_len);
  Spectrogram spec(cfg, frames);
  Eigen::FFT<double> fft;
  std::vector<cplx> buf(cfg.fft_size), out;
  for (int m = 0; m < frames; ++m) {
    const double* x = w.samples.data() + static_cast<std::size_t>(m) * cfg.hop;
    std::fill(buf.begin(), buf.end(), cplx{});
    for (int n = 0; n < cfg.frame_len; ++n) buf[n] = x[n] * window[n];
    fft.fwd(out, buf);
    std::copy_n(out.begin(), spec.bins(), spec.frame(m));
  }
  return spec;
}

namespace detail {

// Real inverse DFT of a one-sided spectrum; imaginary parts of the DC and
// Nyquist bins are ignored.
inline void inverse_frame(Eigen::FFT<double>& fft, const cplx* half, int nfft, std::vector<cplx>& full,
                          std::vector<cplx>& time) {
  const int bins = nfft / 2 + 1;
  full.assign(nfft, cplx{});
  full[0] = half[0].real();
  full[nfft / 2] = half[nfft / 2].real();
  for (int k = 1; k < bins - 1; ++k) {
    full[k] = half[k];
    full[nfft - k] = std::conj(half[k]);
  }
  fft.inv(time, full);
}

inline std::vector<double> synthesis_envelope(int frames, const StftConfig& cfg, const std::vector<double>& window) {
  std::vector<double> env(synthesis_length(frames, cfg), 0.0);
  for (int m = 0; m < frames; ++m)
    for (int n = 0; n < cfg.frame_len; ++n) env[static_cast<std::size_t>(m) * cfg.hop + n] += window[n] * window[n];
  return env;
}

inline double envelope_floor(const std::vector<double>& env) {
  double peak = 0.0;
  for (double e : env) peak = std::max(peak, e);
  return 1e-10 * peak;
}

}  // namespace detail

/// Output length is (M - 1) * hop + frame_len. Samples where the squared-window
/// envelope vanishes (the very first sample for Hann) come out as zero.
inline Waveform synthesize(const Spectrogram& spec, int sample_rate = kDefaultSampleRate) {
  const auto& cfg = spec.config();
  cfg.validate();
  const int frames = spec.frames();
  const auto window = make_window(cfg.window, cfg.frame_len);
  std::vector<double> out(synthesis_length(frames, cfg), 0.0);
  Eigen::FFT<double> fft;
  std::vector<cplx> full, time;
  for (int m = 0; m < frames; ++m) {
    detail::inverse_frame(fft, spec.frame(m), cfg.fft_size, full, time);
    double* y = out.data() + static_cast<std::size_t>(m) * cfg.hop;
    for (int n = 0; n < cfg.frame_len; ++n) y[n] += time[n].real() * window[n];
  }
  const auto env = detail::synthesis_envelope(frames, cfg, window);
  const double floor = detail::envelope_floor(env);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = env[i] > floor ? out[i] / env[i] : 0.0;
  return {std::move(out), sample_rate};
}

/// Adjoint of `synthesize`: maps dL/d(output samples) to dL/dRe and dL/dIm of
/// every bin, returned as a spectrogram holding (dRe + j dIm).
inline Spectrogram synthesize_adjoint(const std::vector<double>& grad_out, const StftConfig& cfg, int frames) {
  cfg.validate();
  if (grad_out.size() != synthesis_length(frames, cfg))
    throw std::invalid_argument("synthesize_adjoint: gradient length mismatch");
  const auto window = make_window(cfg.window, cfg.frame_len);
  const auto env = detail::synthesis_envelope(frames, cfg, window);
  const double floor = detail::envelope_floor(env);
  const int nfft = cfg.fft_size;

  Spectrogram grad(cfg, frames);
  Eigen::FFT<double> fft;
  std::vector<cplx> buf(nfft), spec;
  for (int m = 0; m < frames; ++m) {
    std::fill(buf.begin(), buf.end(), cplx{});
    const std::size_t off = static_cast<std::size_t>(m) * cfg.hop;
    for (int n = 0; n < cfg.frame_len; ++n) {
      const double e = env[off + n];
      if (e > floor) buf[n] = grad_out[off + n] * window[n] / e;
    }
    fft.fwd(spec, buf);
    cplx* g = grad.frame(m);
    for (int k = 0; k < grad.bins(); ++k) {
      const bool edge = k == 0 || k == nfft / 2;
      const double c = (edge ? 1.0 : 2.0) / nfft;
      // x[n] = (1/N) sum_k c_k (Re X_k cos - Im X_k sin), hence
      // dRe + j dIm = (c_k / N) * FFT(g)[k].
      g[k] = edge ? cplx(c * spec[k].real(), 0.0) : c * spec[k];
    }
  }
  return grad;
}

}  // namespace mfaes
