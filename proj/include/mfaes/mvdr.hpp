#pragma once

// Closed-form multi-frame MVDR:
//   minimize w^H Phi_u w  subject to  w^H gamma = 1
//   w = Phi_u^{-1} gamma / (gamma^H Phi_u^{-1} gamma)

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "mfaes/multiframe.hpp"

namespace mfaes {

inline constexpr double kDefaultLoading = 1e-3;
inline constexpr double kLoadingFloor = 1e-12;
inline constexpr double kDenominatorRatio = 1e-12;

enum class FilterStatus { Solved, FallbackPassthrough };

struct FilterSolution {
  CVector w;
  FilterStatus status = FilterStatus::Solved;

  bool solved() const { return status == FilterStatus::Solved; }
};

inline CVector unit_vector(Eigen::Index L) {
  CVector e = CVector::Zero(L);
  e[0] = 1.0;
  return e;
}

inline FilterSolution passthrough(Eigen::Index L) { return {unit_vector(L), FilterStatus::FallbackPassthrough}; }

namespace detail {

inline void require_finite(const CMatrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

inline void require_hermitian(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument(std::string(what) + ": matrix not Hermitian");
}

}  // namespace detail

/// Diagonally loaded solve: Phi + loading * (trace(Phi)/L + floor) * I.
/// Falls back to passthrough when Phi carries no energy or the denominator is
/// negligible.
inline FilterSolution solve_mvdr(const CMatrix& phi_u, const CVector& gamma, double loading = kDefaultLoading) {
  detail::require_finite(phi_u, "solve_mvdr");
  detail::require_finite(gamma, "solve_mvdr");
  detail::require_hermitian(phi_u, "solve_mvdr");
  const auto L = phi_u.rows();
  if (gamma.size() != L) throw std::invalid_argument("solve_mvdr: size mismatch");

  const double trace_scale = phi_u.trace().real() / static_cast<double>(L);
  // Without undesired energy every distortionless filter is optimal; keep the
  // current frame.
  if (!(trace_scale > kLoadingFloor)) return passthrough(L);
  CMatrix loaded = phi_u;
  loaded.diagonal().array() += loading * (trace_scale + kLoadingFloor);

  const Eigen::LDLT<CMatrix> ldlt(loaded);
  if (ldlt.info() != Eigen::Success) return passthrough(L);
  const CVector x = ldlt.solve(gamma);
  if (!x.allFinite()) return passthrough(L);

  const double den = gamma.dot(x).real();  // gamma^H x
  const double loaded_scale = loaded.trace().real() / static_cast<double>(L);
  if (!(loaded_scale > 0.0) || !(std::abs(den) >= kDenominatorRatio * gamma.squaredNorm() / loaded_scale))
    return passthrough(L);
  return {x / den, FilterStatus::Solved};
}

/// Denominator guard for a given (already Hermitian) inverse estimate.
inline bool inverse_denominator_ok(double den, const CMatrix& inv, const CVector& gamma) {
  const double scale = inv.norm() / std::sqrt(static_cast<double>(inv.rows()));
  return std::isfinite(den) && std::abs(den) > kDenominatorRatio * gamma.squaredNorm() * scale;
}

/// Uses a (predicted) inverse directly; it is Hermitian-symmetrized first.
/// No matrix inversion happens on this path.
inline FilterSolution solve_mvdr_from_inverse(const CMatrix& phi_u_inv, const CVector& gamma) {
  detail::require_finite(phi_u_inv, "solve_mvdr_from_inverse");
  detail::require_finite(gamma, "solve_mvdr_from_inverse");
  const auto L = phi_u_inv.rows();
  if (phi_u_inv.cols() != L || gamma.size() != L) throw std::invalid_argument("solve_mvdr_from_inverse: size mismatch");
  const CMatrix inv = 0.5 * (phi_u_inv + phi_u_inv.adjoint());
  const CVector u = inv * gamma;
  const double den = gamma.dot(u).real();
  if (!inverse_denominator_ok(den, inv, gamma)) return passthrough(L);
  return {u / den, FilterStatus::Solved};
}

/// S_hat = w^H y.
inline cplx apply_filter(const FilterSolution& sol, const CVector& y) {
  if (sol.w.size() != y.size()) throw std::invalid_argument("apply_filter: length mismatch");
  return sol.w.dot(y);
}

}  // namespace mfaes
