#pragma once

// Multi-frame representation of an STFT bin: stacked frame vectors, recursive
// correlation estimates, and oracle filter parameters from known components.

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mfaes/stft.hpp"

namespace mfaes {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kDefaultSmoothing = 0.8;
inline constexpr double kPowerFloorRatio = 1e-12;

/// y(k, m) = [Y(k, m), Y(k, m-1), ..., Y(k, m-L+1)]^T with zeros before frame 0.
inline CVector stack_at(const Spectrogram& spec, int k, int m, int L) {
  CVector y = CVector::Zero(L);
  for (int l = 0; l < L && m - l >= 0; ++l) y[l] = spec(k, m - l);
  return y;
}

/// All stacks of a spectrogram, indexed m * K + k.
class FrameStacks {
 public:
  FrameStacks(const Spectrogram& spec, int L) : bins_(spec.bins()), frames_(spec.frames()), L_(L) {
    if (L < 1) throw std::invalid_argument("stack_frames: L must be >= 1");
    stacks_.reserve(static_cast<std::size_t>(bins_) * frames_);
    for (int m = 0; m < frames_; ++m)
      for (int k = 0; k < bins_; ++k) stacks_.push_back(stack_at(spec, k, m, L));
  }

  int bins() const { return bins_; }
  int frames() const { return frames_; }
  int length() const { return L_; }
  const CVector& operator()(int k, int m) const { return stacks_[static_cast<std::size_t>(m) * bins_ + k]; }

  /// Stacks of one bin over time.
  std::vector<CVector> bin(int k) const {
    std::vector<CVector> out;
    out.reserve(frames_);
    for (int m = 0; m < frames_; ++m) out.push_back((*this)(k, m));
    return out;
  }

 private:
  int bins_, frames_, L_;
  std::vector<CVector> stacks_;
};

inline FrameStacks stack_frames(const Spectrogram& spec, int L) { return FrameStacks(spec, L); }

/// Phi(m) = lambda Phi(m-1) + (1 - lambda) y y^H, Phi(-1) = 0, re-symmetrized
/// after every update.
class RecursiveCorrelation {
 public:
  RecursiveCorrelation(int L, double lambda) : lambda_(lambda), phi_(CMatrix::Zero(L, L)) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("smoothing factor must lie in (0, 1)");
  }

  const CMatrix& update(const CVector& y) {
    phi_ = lambda_ * phi_ + (1.0 - lambda_) * (y * y.adjoint());
    phi_ = (0.5 * (phi_ + phi_.adjoint())).eval();
    return phi_;
  }

  const CMatrix& value() const { return phi_; }

 private:
  double lambda_;
  CMatrix phi_;
};

inline std::vector<CMatrix> estimate_corr(const std::vector<CVector>& stacks, double lambda) {
  std::vector<CMatrix> out;
  if (stacks.empty()) return out;
  RecursiveCorrelation rc(static_cast<int>(stacks.front().size()), lambda);
  out.reserve(stacks.size());
  for (const auto& y : stacks) out.push_back(rc.update(y));
  return out;
}

/// gamma = Phi_s e / (e^T Phi_s e). Returns e when the (0, 0) power is at or
/// below `power_floor`; gamma[0] is exactly 1 otherwise.
inline CVector ifc_from_corr(const CMatrix& phi_s, double power_floor, bool* fell_back = nullptr) {
  const auto L = phi_s.rows();
  const double p0 = phi_s(0, 0).real();
  CVector gamma = CVector::Zero(L);
  if (!(p0 > power_floor)) {
    gamma[0] = 1.0;
    if (fell_back) *fell_back = true;
    return gamma;
  }
  gamma = phi_s.col(0) / p0;
  gamma[0] = 1.0;
  if (fell_back) *fell_back = false;
  return gamma;
}

inline double mean_power(const Spectrogram& spec) {
  double acc = 0.0;
  for (const auto& v : spec.data()) acc += std::norm(v);
  return spec.data().empty() ? 0.0 : acc / static_cast<double>(spec.data().size());
}

/// Per-(k, m) IFC vectors from clean speech, indexed m * K + k.
inline std::vector<CVector> oracle_ifc(const Spectrogram& clean, int L, double lambda = kDefaultSmoothing) {
  const double floor = kPowerFloorRatio * mean_power(clean);
  const int K = clean.bins(), M = clean.frames();
  std::vector<CVector> out(static_cast<std::size_t>(K) * M);
  for (int k = 0; k < K; ++k) {
    RecursiveCorrelation rc(L, lambda);
    for (int m = 0; m < M; ++m)
      out[static_cast<std::size_t>(m) * K + k] = ifc_from_corr(rc.update(stack_at(clean, k, m, L)), floor);
  }
  return out;
}

/// Phi_u = Phi_d + Phi_v, each smoothed separately; indexed m * K + k.
inline std::vector<CMatrix> oracle_undesired_corr(const Spectrogram& echo, const Spectrogram& noise, int L,
                                                  double lambda = kDefaultSmoothing) {
  if (echo.bins() != noise.bins() || echo.frames() != noise.frames())
    throw std::invalid_argument("oracle_undesired_corr: spectrogram shapes differ");
  const int K = echo.bins(), M = echo.frames();
  std::vector<CMatrix> out(static_cast<std::size_t>(K) * M);
  for (int k = 0; k < K; ++k) {
    RecursiveCorrelation rd(L, lambda), rv(L, lambda);
    for (int m = 0; m < M; ++m)
      out[static_cast<std::size_t>(m) * K + k] = rd.update(stack_at(echo, k, m, L)) + rv.update(stack_at(noise, k, m, L));
  }
  return out;
}

}  // namespace mfaes
