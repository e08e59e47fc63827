#pragma once

// Differentiable signal-processing ops that connect the estimator heads to the
// waveform loss: MVDR filtering from a predicted inverse, spectral masking,
// inverse STFT and negative SI-SDR.
//
// Spectra travel as [T x 2K] tensors: columns [0, K) hold the real parts of
// one frame, columns [K, 2K) the imaginary parts.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfaes/metrics.hpp"
#include "mfaes/mvdr.hpp"
#include "mfaes/nn/tensor.hpp"
#include "mfaes/stft.hpp"

namespace mfaes {

/// Column layout of the two estimator heads for K bins and filter length L.
///  inverse head: Re at (k * L + i) * L + j, Im at K * L^2 + same
///  IFC head:     Re of gamma[l + 1] at k * (L - 1) + l, Im at K * (L - 1) + same
struct HeadLayout {
  int bins;
  int L;

  int inverse_width() const { return 2 * bins * L * L; }
  int ifc_width() const { return 2 * bins * (L - 1); }
  int inverse_re(int k, int i, int j) const { return (k * L + i) * L + j; }
  int inverse_im(int k, int i, int j) const { return bins * L * L + inverse_re(k, i, j); }
  int ifc_re(int k, int l) const { return k * (L - 1) + l; }
  int ifc_im(int k, int l) const { return bins * (L - 1) + ifc_re(k, l); }

  CMatrix inverse_at(const std::vector<double>& head, int t, int k) const {
    const double* row = head.data() + static_cast<std::size_t>(t) * inverse_width();
    CMatrix A(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) A(i, j) = {row[inverse_re(k, i, j)], row[inverse_im(k, i, j)]};
    return A;
  }

  /// gamma with its first entry pinned to 1.
  CVector ifc_at(const std::vector<double>& head, int t, int k) const {
    CVector g(L);
    g[0] = 1.0;
    if (L > 1) {
      const double* row = head.data() + static_cast<std::size_t>(t) * ifc_width();
      for (int l = 0; l < L - 1; ++l) g[l + 1] = {row[ifc_re(k, l)], row[ifc_im(k, l)]};
    }
    return g;
  }
};

inline nn::Tensor spectrum_tensor(const Spectrogram& spec) {
  const int T = spec.frames(), K = spec.bins();
  std::vector<double> v(static_cast<std::size_t>(T) * 2 * K);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) {
      v[static_cast<std::size_t>(t) * 2 * K + k] = spec(k, t).real();
      v[static_cast<std::size_t>(t) * 2 * K + K + k] = spec(k, t).imag();
    }
  return nn::Tensor::constant({T, 2 * K}, std::move(v));
}

inline Spectrogram spectrum_from_tensor(const nn::Tensor& t, const StftConfig& cfg) {
  const int T = t.dim(0), K = cfg.bins();
  if (t.dim(1) != 2 * K) throw std::invalid_argument("spectrum_from_tensor: width mismatch");
  Spectrogram spec(cfg, T);
  for (int m = 0; m < T; ++m)
    for (int k = 0; k < K; ++k)
      spec(k, m) = {t[static_cast<std::size_t>(m) * 2 * K + k], t[static_cast<std::size_t>(m) * 2 * K + K + k]};
  return spec;
}

/// Per (k, m): w = B gamma / (gamma^H B gamma) with B = (A + A^H) / 2, then
/// S_hat = w^H y(k, m). Bins failing the denominator guard pass Y(k, m)
/// through and receive no gradient. `fallbacks`, if given, counts them.
inline nn::Tensor mvdr_filter(const nn::Tensor& inverse_head, const nn::Tensor& ifc_head, const Spectrogram& noisy,
                              int L, int* fallbacks = nullptr) {
  const HeadLayout layout{noisy.bins(), L};
  const int T = noisy.frames(), K = noisy.bins();
  if (inverse_head.dim(0) != T || inverse_head.dim(1) != layout.inverse_width() || ifc_head.dim(0) != T ||
      ifc_head.dim(1) != layout.ifc_width())
    throw std::invalid_argument("mvdr_filter: head shapes do not match spectrogram and L");
  if (!std::all_of(inverse_head.value().begin(), inverse_head.value().end(), [](double v) { return std::isfinite(v); }) ||
      !std::all_of(ifc_head.value().begin(), ifc_head.value().end(), [](double v) { return std::isfinite(v); }))
    throw std::invalid_argument("mvdr_filter: non-finite estimator output");

  auto solved = std::make_shared<std::vector<char>>(static_cast<std::size_t>(T) * K, 0);
  auto noisy_ref = std::make_shared<Spectrogram>(noisy);
  std::vector<double> v(static_cast<std::size_t>(T) * 2 * K);
  int fb = 0;
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) {
      const CMatrix A = layout.inverse_at(inverse_head.value(), t, k);
      const CMatrix B = 0.5 * (A + A.adjoint());
      const CVector g = layout.ifc_at(ifc_head.value(), t, k);
      const CVector u = B * g;
      const double den = g.dot(u).real();
      cplx s;
      if (inverse_denominator_ok(den, B, g)) {
        s = u.dot(stack_at(noisy, k, t, L)) / den;
        (*solved)[static_cast<std::size_t>(t) * K + k] = 1;
      } else {
        s = noisy(k, t);
        ++fb;
      }
      v[static_cast<std::size_t>(t) * 2 * K + k] = s.real();
      v[static_cast<std::size_t>(t) * 2 * K + K + k] = s.imag();
    }
  if (fallbacks) *fallbacks = fb;

  return nn::make_op({T, 2 * K}, std::move(v), {inverse_head, ifc_head}, [layout, T, K, L, solved, noisy_ref](nn::Node& self) {
    nn::Node& pA = *self.parents[0];
    nn::Node& pG = *self.parents[1];
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        if (!(*solved)[static_cast<std::size_t>(t) * K + k]) continue;
        const cplx ghat(self.grad[static_cast<std::size_t>(t) * 2 * K + k],
                        self.grad[static_cast<std::size_t>(t) * 2 * K + K + k]);
        if (ghat == cplx{}) continue;
        const CMatrix A = layout.inverse_at(pA.value, t, k);
        const CMatrix B = 0.5 * (A + A.adjoint());
        const CVector g = layout.ifc_at(pG.value, t, k);
        const CVector y = stack_at(*noisy_ref, k, t, L);
        const CVector u = B * g;
        const double den = g.dot(u).real();
        const cplx s = u.dot(y) / den;

        // Gradients below use the convention G = dL/dRe + j dL/dIm.
        const CVector Gu = std::conj(ghat) * y / den;
        const double Gden = -std::real(std::conj(ghat) * s) / den;
        if (pA.requires_grad) {
          const CMatrix GB = (Gden * g + Gu) * g.adjoint();
          const CMatrix GA = 0.5 * (GB + GB.adjoint());
          auto& gA = pA.grad_buffer();
          double* row = gA.data() + static_cast<std::size_t>(t) * layout.inverse_width();
          for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) {
              row[layout.inverse_re(k, i, j)] += GA(i, j).real();
              row[layout.inverse_im(k, i, j)] += GA(i, j).imag();
            }
        }
        if (pG.requires_grad && L > 1) {
          const CVector Gg = 2.0 * Gden * u + B * Gu;
          double* row = pG.grad_buffer().data() + static_cast<std::size_t>(t) * layout.ifc_width();
          for (int l = 0; l < L - 1; ++l) {
            row[layout.ifc_re(k, l)] += Gg[l + 1].real();
            row[layout.ifc_im(k, l)] += Gg[l + 1].imag();
          }
        }
      }
  });
}

/// mask [T x K] applied to the noisy spectrum; keeps the noisy phase.
inline nn::Tensor spectral_mask(const nn::Tensor& mask, const Spectrogram& noisy) {
  const int T = noisy.frames(), K = noisy.bins();
  if (mask.dim(0) != T || mask.dim(1) != K) throw std::invalid_argument("spectral_mask: shape mismatch");
  std::vector<double> v(static_cast<std::size_t>(T) * 2 * K);
  auto noisy_ref = std::make_shared<Spectrogram>(noisy);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) {
      const double g = mask[static_cast<std::size_t>(t) * K + k];
      v[static_cast<std::size_t>(t) * 2 * K + k] = g * noisy(k, t).real();
      v[static_cast<std::size_t>(t) * 2 * K + K + k] = g * noisy(k, t).imag();
    }
  return nn::make_op({T, 2 * K}, std::move(v), {mask}, [T, K, noisy_ref](nn::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        const cplx y = (*noisy_ref)(k, t);
        g[static_cast<std::size_t>(t) * K + k] += self.grad[static_cast<std::size_t>(t) * 2 * K + k] * y.real() +
                                                  self.grad[static_cast<std::size_t>(t) * 2 * K + K + k] * y.imag();
      }
  });
}

/// Inverse STFT of a [T x 2K] spectrum tensor into a waveform tensor [N].
inline nn::Tensor istft(const nn::Tensor& spec, const StftConfig& cfg) {
  const Spectrogram s = spectrum_from_tensor(spec, cfg);
  Waveform w = synthesize(s);
  const int T = spec.dim(0), K = cfg.bins();
  const int N = static_cast<int>(w.size());
  return nn::make_op({N}, std::move(w.samples), {spec}, [cfg, T, K](nn::Node& self) {
    const Spectrogram g = synthesize_adjoint(self.grad, cfg, T);
    auto& out = self.parents[0]->grad_buffer();
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        out[static_cast<std::size_t>(t) * 2 * K + k] += g(k, t).real();
        out[static_cast<std::size_t>(t) * 2 * K + K + k] += g(k, t).imag();
      }
  });
}

/// -SI-SDR(est, ref) in dB. Only the first est.numel() reference samples are
/// used when the reconstruction is shorter than the reference.
inline nn::Tensor si_sdr_loss(const nn::Tensor& est, std::span<const double> ref_full, double eps = kSiSdrEps) {
  const std::size_t n = est.numel();
  if (ref_full.size() < n) throw std::invalid_argument("si_sdr_loss: reference shorter than estimate");
  auto ref = std::make_shared<std::vector<double>>(ref_full.begin(), ref_full.begin() + static_cast<std::ptrdiff_t>(n));
  const double loss = -si_sdr_db(est.value(), *ref, eps);
  return nn::make_op({1}, {loss}, {est}, [ref, eps](nn::Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& s = *ref;
    double dot = 0.0, rr = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      dot += x[i] * s[i];
      rr += s[i] * s[i];
    }
    const double a = dot / rr;
    double e_dot_s = 0.0, D = eps;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double e = a * s[i] - x[i];
      e_dot_s += e * s[i];
      D += e * e;
    }
    const double N = a * a * rr;
    // d(-SI-SDR)/dx = -(10 / ln 10) (dN/N - dD/D)
    //   dN/dx = 2 a s,  dD/dx = 2 ((e.s) / rr) s - 2 e
    const double c = -10.0 / std::log(10.0) * self.grad[0];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double e = a * s[i] - x[i];
      const double dN = 2.0 * a * s[i];
      const double dD = 2.0 * (e_dot_s / rr) * s[i] - 2.0 * e;
      g[i] += c * (dN / N - dD / D);
    }
  });
}

}  // namespace mfaes
