#pragma once

// NV ground-state spin-1 model: tetrahedral axis geometry, the Hamiltonian
// in each axis frame, exact transition frequencies from its eigenvalues, and
// the first-order Zeeman approximation f = D +/- gamma_e * B_axis.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "nvtherm/errors.hpp"
#include "nvtherm/hermitian3.hpp"
#include "nvtherm/vec3.hpp"

namespace nvtherm {

// Free-electron-like NV gyromagnetic ratio, g = 2.0028.
inline constexpr double kGammaElectronHzPerTesla = 2.8024954e10;

inline constexpr double kAxisNormTolerance = 1e-6;

// The four <111> orientations of the NV symmetry axis in crystal coordinates.
struct NVAxisSet {
  std::array<Vec3, 4> axes;

  static NVAxisSet tetrahedral() {
    const double k = 1.0 / std::numbers::sqrt3;
    return NVAxisSet{{Vec3{k, k, k}, Vec3{k, -k, -k}, Vec3{-k, k, -k}, Vec3{-k, -k, k}}};
  }

  const Vec3& operator[](std::size_t i) const { return axes[i]; }
  static constexpr std::size_t size() { return 4; }
};

struct SpinParams {
  double D = 2.87e9;   // Hz
  double E = 0.0;      // Hz
  double gamma_e = kGammaElectronHzPerTesla;  // Hz/T
  Vec3 B{};            // T

  void validate() const {
    if (!(D > 0.0) || !std::isfinite(D)) throw Error(ErrorCode::invalid_argument, "D must be positive");
    if (!(E >= 0.0) || !std::isfinite(E)) throw Error(ErrorCode::invalid_argument, "E must be non-negative");
    if (!(gamma_e > 0.0) || !std::isfinite(gamma_e))
      throw Error(ErrorCode::invalid_argument, "gamma_e must be positive");
  }

  // gamma_e*|B| / D; the m_s=0 level is the ground state while this is < 1/2.
  double field_ratio() const { return gamma_e * norm(B) / D; }
  bool in_weak_field_regime() const { return field_ratio() < 0.5; }
};

// Basis order |+1>, |0>, |-1>.
using Hamiltonian3 = Matrix3c;

struct TransitionPair {
  double f_minus = 0.0;
  double f_plus = 0.0;
  int axis_index = 1;  // 1..4

  double midpoint() const { return 0.5 * (f_plus + f_minus); }
  double half_splitting() const { return 0.5 * (f_plus - f_minus); }
};

inline void require_unit_axis(const Vec3& axis) {
  const double n = norm(axis);
  if (!(std::abs(n - 1.0) <= kAxisNormTolerance)) {
    throw Error(ErrorCode::invalid_axis, "axis norm " + std::to_string(n) + " is not 1");
  }
}

inline double axis_projection(const Vec3& B, const Vec3& axis) {
  require_unit_axis(axis);
  return dot(B, axis);
}

// H = D Sz^2 + E (Sx^2 - Sy^2) + gamma_e B.S with Sz along `axis` and the
// transverse field component defining the local x direction. In that frame
// every matrix element is real.
inline Hamiltonian3 build_hamiltonian(const SpinParams& params, const Vec3& axis) {
  params.validate();
  const double b_par = axis_projection(params.B, axis);
  const double b_perp = norm(params.B - axis * b_par);
  const double zeeman_z = params.gamma_e * b_par;
  const double zeeman_x = params.gamma_e * b_perp / std::numbers::sqrt2;

  Hamiltonian3 h;
  h(0, 0) = params.D + zeeman_z;
  h(1, 1) = 0.0;
  h(2, 2) = params.D - zeeman_z;
  h(0, 1) = h(1, 0) = zeeman_x;
  h(1, 2) = h(2, 1) = zeeman_x;
  h(0, 2) = h(2, 0) = params.E;
  return h;
}

inline TransitionPair exact_transitions(const SpinParams& params, const Vec3& axis, int axis_index = 1) {
  params.validate();
  if (!params.in_weak_field_regime()) throw RegimeError(params.field_ratio());
  const Eigenvalues3 lambda = eigenvalues3(build_hamiltonian(params, axis));
  return TransitionPair{lambda[1] - lambda[0], lambda[2] - lambda[0], axis_index};
}

inline TransitionPair approx_transitions(const SpinParams& params, const Vec3& axis, int axis_index = 1) {
  params.validate();
  const double shift = params.gamma_e * std::abs(axis_projection(params.B, axis));
  return TransitionPair{params.D - shift, params.D + shift, axis_index};
}

inline std::array<TransitionPair, 4> approx_transitions_all(const SpinParams& params, const NVAxisSet& axes) {
  std::array<TransitionPair, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = approx_transitions(params, axes[i], static_cast<int>(i) + 1);
  return out;
}

inline std::array<TransitionPair, 4> exact_transitions_all(const SpinParams& params, const NVAxisSet& axes) {
  std::array<TransitionPair, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = exact_transitions(params, axes[i], static_cast<int>(i) + 1);
  return out;
}

}  // namespace nvtherm
