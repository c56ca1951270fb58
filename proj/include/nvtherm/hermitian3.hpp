#pragma once

// Eigenvalues of 3x3 Hermitian matrices.
//
// The primary route is the trigonometric solution of the (real) characteristic
// cubic. Near-degenerate spectra, where acos() loses half the significant
// digits, are handed to a cyclic complex Jacobi iteration instead.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "nvtherm/errors.hpp"

namespace nvtherm {

using cplx = std::complex<double>;

struct Matrix3c {
  std::array<std::array<cplx, 3>, 3> m{};

  cplx& operator()(int i, int j) { return m[i][j]; }
  const cplx& operator()(int i, int j) const { return m[i][j]; }

  double trace() const { return m[0][0].real() + m[1][1].real() + m[2][2].real(); }

  double max_abs() const {
    double out = 0.0;
    for (const auto& row : m)
      for (const auto& v : row) out = std::max(out, std::abs(v));
    return out;
  }

  // Largest |H_ij - conj(H_ji)|, diagonal imaginary parts included.
  double hermitian_defect() const {
    double out = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) out = std::max(out, std::abs(m[i][j] - std::conj(m[j][i])));
    return out;
  }

  bool is_hermitian(double rel_tol = 1e-9) const { return hermitian_defect() <= rel_tol * max_abs(); }
};

using Eigenvalues3 = std::array<double, 3>;

namespace detail {

inline Matrix3c multiply(const Matrix3c& a, const Matrix3c& b) {
  Matrix3c out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      cplx s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline Matrix3c adjoint(const Matrix3c& a) {
  Matrix3c out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = std::conj(a(j, i));
  return out;
}

inline double off_diagonal_norm2(const Matrix3c& a) {
  return std::norm(a(0, 1)) + std::norm(a(0, 2)) + std::norm(a(1, 2));
}

}  // namespace detail

// Cyclic Jacobi for a Hermitian 3x3. Each rotation first removes the phase of
// the pivot element, then applies the real symmetric 2x2 rotation.
inline Eigenvalues3 jacobi_eigenvalues3(Matrix3c a) {
  const double scale = std::max(a.max_abs(), 1e-300);
  constexpr int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    if (detail::off_diagonal_norm2(a) <= 1e-34 * scale * scale) break;
    for (const auto& pq : pairs) {
      const int p = pq[0];
      const int q = pq[1];
      const double mag = std::abs(a(p, q));
      if (mag <= 1e-300) continue;
      const cplx phase = a(p, q) / mag;
      const double app = a(p, p).real();
      const double aqq = a(q, q).real();
      const double theta = (aqq - app) / (2.0 * mag);
      const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      // V = diag(1, conj(phase)) on (p,q), followed by the real rotation.
      Matrix3c v;
      for (int i = 0; i < 3; ++i) v(i, i) = 1.0;
      v(p, p) = c;
      v(p, q) = s;
      v(q, p) = -s * std::conj(phase);
      v(q, q) = c * std::conj(phase);
      a = detail::multiply(detail::adjoint(v), detail::multiply(a, v));
      a(p, q) = 0.0;
      a(q, p) = 0.0;
    }
  }
  Eigenvalues3 out{a(0, 0).real(), a(1, 1).real(), a(2, 2).real()};
  std::sort(out.begin(), out.end());
  return out;
}

// Ascending eigenvalues. Throws invalid-matrix for non-Hermitian input.
inline Eigenvalues3 eigenvalues3(const Matrix3c& h) {
  if (!h.is_hermitian()) {
    throw Error(ErrorCode::invalid_matrix, "matrix is not Hermitian (defect " +
                                               std::to_string(h.hermitian_defect()) + ")");
  }
  const double a0 = h(0, 0).real();
  const double a1 = h(1, 1).real();
  const double a2 = h(2, 2).real();
  const cplx h01 = 0.5 * (h(0, 1) + std::conj(h(1, 0)));
  const cplx h02 = 0.5 * (h(0, 2) + std::conj(h(2, 0)));
  const cplx h12 = 0.5 * (h(1, 2) + std::conj(h(2, 1)));
  const double off = std::norm(h01) + std::norm(h02) + std::norm(h12);
  if (off == 0.0) {
    Eigenvalues3 out{a0, a1, a2};
    std::sort(out.begin(), out.end());
    return out;
  }

  const double q = (a0 + a1 + a2) / 3.0;
  const double b0 = a0 - q;
  const double b1 = a1 - q;
  const double b2 = a2 - q;
  const double p = std::sqrt((b0 * b0 + b1 * b1 + b2 * b2 + 2.0 * off) / 6.0);
  const double det = b0 * b1 * b2 + 2.0 * (h01 * h12 * std::conj(h02)).real() - b0 * std::norm(h12) -
                     b1 * std::norm(h02) - b2 * std::norm(h01);
  const double r = std::clamp(det / (2.0 * p * p * p), -1.0, 1.0);

  // 1 - r^2 is the discriminant of the normalized cubic t^3 - 3t - 2r.
  if (1.0 - r * r < 1e-10) return jacobi_eigenvalues3(h);

  const double phi = std::acos(r) / 3.0;
  const double hi = q + 2.0 * p * std::cos(phi);
  const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double mid = 3.0 * q - hi - lo;
  Eigenvalues3 out{lo, mid, hi};
  std::sort(out.begin(), out.end());
  return out;
}

// det(H - lambda I) for Hermitian H; real by construction.
inline double characteristic_polynomial(const Matrix3c& h, double lambda) {
  const double b0 = h(0, 0).real() - lambda;
  const double b1 = h(1, 1).real() - lambda;
  const double b2 = h(2, 2).real() - lambda;
  return b0 * b1 * b2 + 2.0 * (h(0, 1) * h(1, 2) * std::conj(h(0, 2))).real() - b0 * std::norm(h(1, 2)) -
         b1 * std::norm(h(0, 2)) - b2 * std::norm(h(0, 1));
}

}  // namespace nvtherm
