#pragma once

// CW-ODMR spectrum synthesis: Lorentzian dips on a unit fluorescence baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/errors.hpp"
#include "nvtherm/spin_model.hpp"

namespace nvtherm {

struct LorentzianPeak {
  double center = 0.0;    // Hz
  double fwhm = 1.0;      // Hz
  double contrast = 0.0;  // fractional dip depth

  void validate() const {
    if (!(fwhm > 0.0) || !std::isfinite(fwhm)) throw Error(ErrorCode::invalid_argument, "fwhm must be positive");
    if (!(contrast > 0.0 && contrast < 1.0))
      throw Error(ErrorCode::invalid_argument, "contrast must lie in (0, 1)");
    if (!std::isfinite(center)) throw Error(ErrorCode::invalid_argument, "center must be finite");
  }

  // Depth of this dip at frequency f.
  double dip(double f) const {
    const double hw = 0.5 * fwhm;
    const double d = f - center;
    return contrast * hw * hw / (d * d + hw * hw);
  }
};

struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> signal;

  std::size_t size() const { return freqs.size(); }

  void validate() const {
    if (freqs.size() != signal.size())
      throw Error(ErrorCode::invalid_argument, "frequency and signal lengths differ");
    if (freqs.size() < 2) throw Error(ErrorCode::insufficient_data, "spectrum needs at least two samples");
    for (std::size_t i = 1; i < freqs.size(); ++i) {
      if (!(freqs[i] > freqs[i - 1]))
        throw Error(ErrorCode::invalid_argument, "frequencies not strictly increasing at index " + std::to_string(i));
    }
  }
};

inline std::vector<double> uniform_grid(double center, double half_span, std::size_t points) {
  if (points < 2 || !(half_span > 0.0))
    throw Error(ErrorCode::invalid_argument, "grid needs >= 2 points and a positive span");
  std::vector<double> out(points);
  const double step = 2.0 * half_span / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) out[i] = center - half_span + step * static_cast<double>(i);
  return out;
}

// 601 points over D +/- 250 MHz.
inline std::vector<double> default_grid(double D) { return uniform_grid(D, 250e6, 601); }

inline Spectrum synthesize(std::span<const LorentzianPeak> peaks, std::span<const double> grid, double noise_sigma,
                           std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::invalid_argument, "noise_sigma must be >= 0");
  for (const auto& p : peaks) p.validate();

  Spectrum s;
  s.freqs.assign(grid.begin(), grid.end());
  s.signal.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double depth = 0.0;
    for (const auto& p : peaks) depth += p.dip(grid[i]);
    if (depth >= 1.0) {
      throw Error(ErrorCode::model, "summed dip depth " + std::to_string(depth) + " >= 1 at " +
                                        std::to_string(grid[i]) + " Hz");
    }
    s.signal[i] = 1.0 - depth;
  }
  s.validate();

  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (double& v : s.signal) v += noise(rng);
  }
  return s;
}

// Two dips per axis from the first-order transitions. `per_axis_contrast` is
// shared between an axis' two transitions, scaled by that axis' population
// weight relative to 1/4.
inline std::vector<LorentzianPeak> ensemble_peaks(const SpinParams& params, const NVAxisSet& axes, double fwhm,
                                                  double per_axis_contrast,
                                                  const std::array<double, 4>& weights = {0.25, 0.25, 0.25, 0.25}) {
  params.validate();
  if (!params.in_weak_field_regime()) throw RegimeError(params.field_ratio());
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::invalid_argument, "axis weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::invalid_argument, "axis weights sum to zero");

  std::vector<LorentzianPeak> peaks;
  peaks.reserve(8);
  for (std::size_t i = 0; i < 4; ++i) {
    if (weights[i] == 0.0) continue;
    const TransitionPair t = approx_transitions(params, axes[i], static_cast<int>(i) + 1);
    const double c = 0.5 * per_axis_contrast * 4.0 * weights[i] / total;
    peaks.push_back({t.f_minus, fwhm, c});
    peaks.push_back({t.f_plus, fwhm, c});
  }
  return peaks;
}

inline Spectrum ensemble_spectrum(const SpinParams& params, const NVAxisSet& axes, double fwhm,
                                  double per_axis_contrast, std::span<const double> grid, double noise_sigma,
                                  std::uint64_t seed,
                                  const std::array<double, 4>& weights = {0.25, 0.25, 0.25, 0.25}) {
  const auto peaks = ensemble_peaks(params, axes, fwhm, per_axis_contrast, weights);
  return synthesize(peaks, grid, noise_sigma, seed);
}

inline constexpr double kFieldAlignmentTolerance = 1e-6;  // rad

// Bias field along axis 1 ([111]): outer pair from axis 1, the other three
// axes coincide in the inner pair.
inline Spectrum zeeman_spectrum(const SpinParams& params, const NVAxisSet& axes, double fwhm,
                                double per_axis_contrast, std::span<const double> grid, double noise_sigma,
                                std::uint64_t seed) {
  const double b = norm(params.B);
  if (b > 0.0) {
    require_unit_axis(axes[0]);
    const double sin_angle = norm(cross(params.B, axes[0])) / b;
    if (sin_angle > kFieldAlignmentTolerance) {
      throw Error(ErrorCode::invalid_mode, "bias field is not aligned with NV axis 1 (sin angle " +
                                               std::to_string(sin_angle) + ")");
    }
  }
  return ensemble_spectrum(params, axes, fwhm, per_axis_contrast, grid, noise_sigma, seed);
}

// Zero applied field: dips at D - E and D + E, `contrast` split evenly so that
// E = 0 gives one dip of depth `contrast`.
inline std::vector<LorentzianPeak> zero_field_peaks(const SpinParams& params, double fwhm, double contrast) {
  params.validate();
  if (norm(params.B) != 0.0)
    throw Error(ErrorCode::invalid_mode, "zero-field spectrum requested with nonzero B; use zeeman_spectrum");
  return {{params.D - params.E, fwhm, 0.5 * contrast}, {params.D + params.E, fwhm, 0.5 * contrast}};
}

inline Spectrum zero_field_spectrum(const SpinParams& params, double fwhm, double contrast,
                                    std::span<const double> grid, double noise_sigma, std::uint64_t seed) {
  const auto peaks = zero_field_peaks(params, fwhm, contrast);
  return synthesize(peaks, grid, noise_sigma, seed);
}

}  // namespace nvtherm
