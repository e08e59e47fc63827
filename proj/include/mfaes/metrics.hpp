#pragma once

// Scale-invariant SDR and echo return loss enhancement.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace mfaes {

inline constexpr double kSiSdrEps = 1e-8;
inline constexpr double kErleEps = 1e-12;

/// SI-SDR in dB with the reference scaled onto the estimate:
///   target = (<est, ref> / ||ref||^2) ref
///   10 log10(||target||^2 / (||target - est||^2 + eps))
inline double si_sdr_db(std::span<const double> est, std::span<const double> ref, double eps = kSiSdrEps) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: length mismatch");
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  if (rr == 0.0) throw std::invalid_argument("si_sdr: all-zero reference");
  const double alpha = dot / rr;
  double target = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double t = alpha * ref[i];
    target += t * t;
    err += (t - est[i]) * (t - est[i]);
  }
  return 10.0 * std::log10(target / (err + eps));
}

/// 10 log10(sum mic^2 / (sum est^2 + eps)) over a single-talk span.
inline double erle_db(std::span<const double> mic, std::span<const double> est, double eps = kErleEps) {
  if (mic.size() != est.size()) throw std::invalid_argument("erle: length mismatch");
  if (mic.empty()) throw std::invalid_argument("erle: empty region");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < mic.size(); ++i) {
    num += mic[i] * mic[i];
    den += est[i] * est[i];
  }
  return 10.0 * std::log10(num / (den + eps));
}

}  // namespace mfaes
