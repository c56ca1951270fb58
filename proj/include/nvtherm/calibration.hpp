#pragma once

// D extraction from fitted spectra, the linear D-T calibration and its
// inversion, and repeatability statistics.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/errors.hpp"
#include "nvtherm/fitting.hpp"

namespace nvtherm {

inline constexpr double kReferenceTemperatureK = 298.0;

enum class Mode { zero_field, zeeman };

inline const char* to_string(Mode m) { return m == Mode::zeeman ? "zeeman" : "zfs"; }

struct DExtraction {
  double D = 0.0;        // Hz
  double sigma_D = 0.0;  // Hz
  Mode mode = Mode::zeeman;
  double E_or_Bsplit = 0.0;  // fitted E (zfs) or gamma_e*B_i half-splitting (zeeman)
  bool asymmetry_warning = false;
  double inner_midpoint = 0.0;  // zeeman only
};

namespace detail {

inline std::vector<std::size_t> center_order(const FitModel& m) {
  std::vector<std::size_t> idx(m.n_peaks());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return m.peaks[a].center < m.peaks[b].center; });
  return idx;
}

// Variance of (c_a + c_b) / 2.
inline double midpoint_variance(const FitResult& fit, std::size_t a, std::size_t b) {
  return 0.25 * (fit.center_covariance(a, a) + fit.center_covariance(b, b) + 2.0 * fit.center_covariance(a, b));
}

inline void require_converged(const FitResult& fit) {
  if (!fit.converged)
    throw Error(ErrorCode::not_converged, "fit did not converge after " + std::to_string(fit.iterations) +
                                              " iterations");
}

}  // namespace detail

// Outer pair = the axis along the bias field; D is its midpoint.
inline DExtraction extract_D_zeeman(const FitResult& fit) {
  if (fit.model.n_peaks() != 4) {
    throw Error(ErrorCode::insufficient_peaks,
                "zeeman extraction needs exactly 4 resolved dips, got " + std::to_string(fit.model.n_peaks()));
  }
  detail::require_converged(fit);
  const auto order = detail::center_order(fit.model);
  const auto& pk = fit.model.peaks;
  const std::size_t lo = order[0], in_lo = order[1], in_hi = order[2], hi = order[3];

  DExtraction out;
  out.mode = Mode::zeeman;
  out.D = 0.5 * (pk[lo].center + pk[hi].center);
  out.E_or_Bsplit = 0.5 * (pk[hi].center - pk[lo].center);
  const double var_outer = std::max(0.0, detail::midpoint_variance(fit, lo, hi));
  const double var_inner = std::max(0.0, detail::midpoint_variance(fit, in_lo, in_hi));
  out.sigma_D = std::sqrt(var_outer);
  out.inner_midpoint = 0.5 * (pk[in_lo].center + pk[in_hi].center);
  // 1 Hz floor so noiseless fits are not flagged on rounding.
  const double tol = 3.0 * std::sqrt(var_outer + var_inner) + 1.0;
  out.asymmetry_warning = std::abs(out.inner_midpoint - out.D) > tol;
  return out;
}

inline DExtraction extract_D_zfs(const FitResult& fit) {
  if (fit.model.n_peaks() != 2) {
    throw Error(ErrorCode::insufficient_peaks,
                "zero-field extraction needs exactly 2 dips, got " + std::to_string(fit.model.n_peaks()));
  }
  detail::require_converged(fit);
  const auto order = detail::center_order(fit.model);
  const auto& pk = fit.model.peaks;
  DExtraction out;
  out.mode = Mode::zero_field;
  out.D = 0.5 * (pk[order[0]].center + pk[order[1]].center);
  out.E_or_Bsplit = 0.5 * (pk[order[1]].center - pk[order[0]].center);
  out.sigma_D = std::sqrt(std::max(0.0, detail::midpoint_variance(fit, order[0], order[1])));
  return out;
}

inline DExtraction extract_D(const FitResult& fit, Mode mode) {
  return mode == Mode::zeeman ? extract_D_zeeman(fit) : extract_D_zfs(fit);
}

// Baseline plus the two outer dips of a 4-dip Zeeman model.
inline FitModel outer_pair_model(const FitModel& m) {
  if (m.n_peaks() != 4) throw Error(ErrorCode::insufficient_peaks, "outer pair needs a 4-dip model");
  const auto order = detail::center_order(m);
  return FitModel{m.baseline, {m.peaks[order[0]], m.peaks[order[3]]}};
}

struct CalibrationRecord {
  double T_ref = kReferenceTemperatureK;  // K
  DExtraction extraction;

  void validate() const {
    if (!(T_ref >= 100.0 && T_ref <= 700.0))
      throw Error(ErrorCode::invalid_argument, "reference temperature " + std::to_string(T_ref) + " K outside 100-700 K");
  }
};

struct CalibrationFit {
  double slope = 0.0;      // Hz/K, signed
  double intercept = 0.0;  // Hz at T0
  double T0 = kReferenceTemperatureK;
  double slope_sigma = 0.0;
  double intercept_sigma = 0.0;
  double residual_std = 0.0;  // Hz
  std::vector<double> temperatures;
  std::vector<double> residuals;  // Hz, D - prediction

  double predict(double T) const { return intercept + slope * (T - T0); }
};

// Weighted straight line D = intercept + slope (T - T0), weights 1/sigma_D^2
// (unit weights if any sigma is zero).
inline CalibrationFit fit_DT(std::span<const CalibrationRecord> records) {
  for (const auto& r : records) r.validate();
  if (records.size() >= 2) {
    const bool all_equal = std::all_of(records.begin(), records.end(),
                                       [&](const CalibrationRecord& r) { return r.T_ref == records.front().T_ref; });
    if (all_equal) throw Error(ErrorCode::degenerate_calibration, "all records share one temperature");
  }
  if (records.size() < 3) throw Error(ErrorCode::insufficient_data, "calibration needs >= 3 records");
  const auto [tmin, tmax] = std::minmax_element(records.begin(), records.end(),
                                                [](const auto& a, const auto& b) { return a.T_ref < b.T_ref; });
  if (tmax->T_ref - tmin->T_ref < 10.0)
    throw Error(ErrorCode::insufficient_data, "calibration records must span at least 10 K");

  const bool unit = std::any_of(records.begin(), records.end(),
                                [](const CalibrationRecord& r) { return !(r.extraction.sigma_D > 0.0); });
  const double T0 = kReferenceTemperatureK;
  double sw = 0.0, swx = 0.0, swy = 0.0;
  for (const auto& r : records) {
    const double w = unit ? 1.0 : 1.0 / (r.extraction.sigma_D * r.extraction.sigma_D);
    sw += w;
    swx += w * (r.T_ref - T0);
    swy += w * r.extraction.D;
  }
  const double xbar = swx / sw;
  const double ybar = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& r : records) {
    const double w = unit ? 1.0 : 1.0 / (r.extraction.sigma_D * r.extraction.sigma_D);
    const double dx = (r.T_ref - T0) - xbar;
    sxx += w * dx * dx;
    sxy += w * dx * (r.extraction.D - ybar);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::degenerate_calibration, "rank-deficient temperature design");

  CalibrationFit cal;
  cal.T0 = T0;
  cal.slope = sxy / sxx;
  cal.intercept = ybar - cal.slope * xbar;
  double ss = 0.0;
  for (const auto& r : records) {
    const double res = r.extraction.D - cal.predict(r.T_ref);
    cal.temperatures.push_back(r.T_ref);
    cal.residuals.push_back(res);
    ss += res * res;
  }
  const double n = static_cast<double>(records.size());
  cal.residual_std = std::sqrt(ss / (n - 2.0));
  // Unit weights: scale by the residual variance; otherwise weights are 1/sigma^2.
  const double s2 = unit ? cal.residual_std * cal.residual_std : 1.0;
  cal.slope_sigma = std::sqrt(s2 / sxx);
  cal.intercept_sigma = std::sqrt(s2 * (1.0 / sw + xbar * xbar / sxx));
  return cal;
}

struct TemperatureEstimate {
  double T = 0.0;      // K
  double sigma = 0.0;  // K
};

inline TemperatureEstimate temperature_from_D(double D, double sigma_D, const CalibrationFit& cal) {
  if (!(std::abs(cal.slope) > 0.0)) throw Error(ErrorCode::non_invertible, "calibration slope is zero");
  return {cal.T0 + (D - cal.intercept) / cal.slope, sigma_D / std::abs(cal.slope)};
}

// Sample standard deviation (n - 1).
inline double repeatability_std(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::insufficient_data, "standard deviation needs >= 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Repeated D measurements at one reference temperature.
struct TemperatureSummary {
  double T_ref = 0.0;
  std::vector<double> Ds;
  std::vector<double> sigmas;
  double mean_D = 0.0;
  double std_D = 0.0;           // repeatability (0 for a single record)
  double sigma_mean = 0.0;      // std_D / sqrt(n), or the fit sigma for a single record
};

// Groups records by temperature (ascending). Repeats are averaged; the
// averaged records carry the standard error as sigma_D.
inline std::vector<TemperatureSummary> summarize_by_temperature(std::span<const CalibrationRecord> records) {
  std::map<double, TemperatureSummary> groups;
  for (const auto& r : records) {
    auto& g = groups[r.T_ref];
    g.T_ref = r.T_ref;
    g.Ds.push_back(r.extraction.D);
    g.sigmas.push_back(r.extraction.sigma_D);
  }
  std::vector<TemperatureSummary> out;
  for (auto& [t, g] : groups) {
    double mean = 0.0;
    for (double d : g.Ds) mean += d;
    g.mean_D = mean / static_cast<double>(g.Ds.size());
    if (g.Ds.size() >= 2) {
      g.std_D = repeatability_std(g.Ds);
      g.sigma_mean = g.std_D / std::sqrt(static_cast<double>(g.Ds.size()));
    } else {
      g.std_D = 0.0;
      g.sigma_mean = g.sigmas.front();
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<CalibrationRecord> averaged_records(std::span<const TemperatureSummary> summaries, Mode mode) {
  std::vector<CalibrationRecord> out;
  for (const auto& s : summaries) {
    DExtraction e;
    e.D = s.mean_D;
    e.sigma_D = s.sigma_mean;
    e.mode = mode;
    out.push_back({s.T_ref, e});
  }
  return out;
}

}  // namespace nvtherm
