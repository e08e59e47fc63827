#pragma once

// End-to-end enhancement: STFT -> filter parameters -> MVDR -> inverse STFT.

#include <stdexcept>
#include <vector>

#include "mfaes/estimator.hpp"
#include "mfaes/multiframe.hpp"
#include "mfaes/mvdr.hpp"
#include "mfaes/scene.hpp"

namespace mfaes {

struct OracleOptions {
  int L = 5;
  double smoothing = kDefaultSmoothing;
  double loading = kDefaultLoading;
  StftConfig stft = StftConfig::standard();
};

struct OracleComponents {
  Spectrogram clean;
  Spectrogram echo;
  Spectrogram noise;
};

struct EnhanceStats {
  long solved = 0;
  long fallbacks = 0;
};

/// Zero-pads or truncates to `n` samples.
inline Waveform fit_length(Waveform w, std::size_t n) {
  w.samples.resize(n, 0.0);
  return w;
}

/// Oracle MFMVDR spectrum: Phi_u from the echo and noise components, gamma
/// from the clean component, both recursively smoothed.
inline Spectrogram enhance_oracle_spectrum(const Spectrogram& noisy, const OracleComponents& oc, const OracleOptions& opt,
                                           EnhanceStats* stats = nullptr) {
  const int K = noisy.bins(), M = noisy.frames(), L = opt.L;
  for (const auto* s : {&oc.clean, &oc.echo, &oc.noise})
    if (s->bins() != K || s->frames() != M) throw std::invalid_argument("enhance: component spectrograms not aligned");
  const double floor = kPowerFloorRatio * mean_power(oc.clean);
  Spectrogram out(noisy.config(), M);
  for (int k = 0; k < K; ++k) {
    RecursiveCorrelation rs(L, opt.smoothing), rd(L, opt.smoothing), rv(L, opt.smoothing);
    for (int m = 0; m < M; ++m) {
      const CVector gamma = ifc_from_corr(rs.update(stack_at(oc.clean, k, m, L)), floor);
      const CMatrix phi_u = rd.update(stack_at(oc.echo, k, m, L)) + rv.update(stack_at(oc.noise, k, m, L));
      const FilterSolution sol = solve_mvdr(phi_u, gamma, opt.loading);
      if (stats) ++(sol.solved() ? stats->solved : stats->fallbacks);
      out(k, m) = apply_filter(sol, stack_at(noisy, k, m, L));
    }
  }
  return out;
}

inline Waveform enhance_oracle(const Scene& sc, const OracleOptions& opt = {}, EnhanceStats* stats = nullptr) {
  const OracleComponents oc{analyze(sc.near, opt.stft), analyze(sc.echo, opt.stft), analyze(sc.noise, opt.stft)};
  const Spectrogram y = analyze(sc.mic, opt.stft);
  return fit_length(synthesize(enhance_oracle_spectrum(y, oc, opt, stats), sc.sample_rate()), sc.size());
}

inline Waveform enhance_with_model(const Estimator& model, const Waveform& mic, const Waveform& far,
                                   EnhanceStats* stats = nullptr) {
  require_rate(far, mic.sample_rate);
  const auto& cfg = model.config().stft;
  const Spectrogram y = analyze(mic, cfg);
  int fb = 0;
  const nn::Tensor s = model.enhance_spectrum(y, analyze(far, cfg), &fb);
  if (stats) {
    stats->fallbacks += fb;
    stats->solved += static_cast<long>(y.bins()) * y.frames() - fb;
  }
  return fit_length(synthesize(spectrum_from_tensor(s, cfg), mic.sample_rate), mic.size());
}

inline Waveform enhance_with_baseline(const BaselineModel& model, const Waveform& mic, const Waveform& far) {
  require_rate(far, mic.sample_rate);
  const auto& cfg = model.config().stft;
  const nn::Tensor s = model.enhance_spectrum(analyze(mic, cfg), analyze(far, cfg));
  return fit_length(synthesize(spectrum_from_tensor(s, cfg), mic.sample_rate), mic.size());
}

}  // namespace mfaes
