#pragma once

// Scale factors from fitted lineshapes, Welch PSD of the parked-frequency
// fluorescence voltage, and the conversion to temperature sensitivity.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/errors.hpp"
#include "nvtherm/fitting.hpp"

namespace nvtherm {

struct TimeSeries {
  double sample_rate = 1.0;  // Hz
  std::vector<double> samples;  // V

  void validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
      throw Error(ErrorCode::invalid_argument, "sample_rate must be positive");
    if (samples.size() < 2) throw Error(ErrorCode::insufficient_data, "time series needs >= 2 samples");
    for (double v : samples)
      if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "non-finite sample");
  }
};

struct ScaleFactor {
  double slope_v_per_hz = 0.0;
  double park_freq = 0.0;  // Hz
};

struct PsdEstimate {
  std::vector<double> freqs;    // Hz
  std::vector<double> density;  // V^2/Hz, one-sided
  std::size_t segments = 0;

  double bin_width() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

struct SensitivityReport {
  std::vector<double> freqs;
  std::vector<double> eta;  // K/sqrt(Hz)
  double avg_below_1hz = 0.0;
  double avg_below_10hz = 0.0;
};

// Steepest point of the fitted line: dense scan of |dS/df|, then golden-section
// refinement around the best sample.
inline ScaleFactor scale_factor(const FitModel& model, double volts_per_unit) {
  if (model.n_peaks() < 1) throw Error(ErrorCode::invalid_argument, "scale factor needs at least one peak");
  double lo = model.peaks.front().center, hi = lo, wmax = 0.0;
  for (const auto& p : model.peaks) {
    lo = std::min(lo, p.center);
    hi = std::max(hi, p.center);
    wmax = std::max(wmax, std::abs(p.fwhm));
  }
  lo -= 10.0 * wmax;
  hi += 10.0 * wmax;
  if (!(hi > lo)) throw Error(ErrorCode::zero_slope, "model has zero linewidth");

  auto slope = [&](double f) { return std::abs(model_derivative(model, f)); };
  constexpr int n = 20001;
  const double step = (hi - lo) / (n - 1);
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i < n; ++i) {
    const double v = slope(lo + step * i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = lo + step * std::max(0, best - 1);
  double b = lo + step * std::min(n - 1, best + 1);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = slope(c), fd = slope(d);
  for (int it = 0; it < 100 && (b - a) > 1e-12 * std::max(1.0, std::abs(a)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = slope(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = slope(d);
    }
  }
  double park = 0.5 * (a + b);
  double value = slope(park);
  if (best_val > value) {
    park = lo + step * best;
    value = best_val;
  }
  const double sf = value * std::abs(volts_per_unit);
  if (!(sf > 0.0) || !std::isfinite(sf)) throw Error(ErrorCode::zero_slope, "model has zero slope everywhere");
  return {sf, park};
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

// Periodic Hann window.
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

}  // namespace detail

struct WelchOptions {
  std::size_t segment_len = 0;  // 0: sized so the series yields `segments` segments
  double overlap = 0.5;
  std::size_t segments = 8;

  std::size_t resolved_segment_len(std::size_t samples) const {
    if (segment_len > 0) return segment_len;
    const double span = 1.0 + static_cast<double>(segments - 1) * (1.0 - overlap);
    auto n = static_cast<std::size_t>(std::floor(static_cast<double>(samples) / span));
    while (n > 1 && n + (segments - 1) * hop(n) > samples) --n;
    return n;
  }
  std::size_t hop(std::size_t n) const {
    return std::max<std::size_t>(1, n - static_cast<std::size_t>(std::floor(overlap * static_cast<double>(n))));
  }
};

// Averaged Hann-windowed periodograms with the segment mean removed. For white
// noise of variance s^2 the one-sided density is 2 s^2 / sample_rate.
inline PsdEstimate welch_psd(const TimeSeries& ts, std::size_t segment_len, double overlap) {
  ts.validate();
  if (segment_len < 8) throw Error(ErrorCode::invalid_segment, "segment length must be >= 8 samples");
  if (segment_len > ts.samples.size())
    throw Error(ErrorCode::invalid_segment, "segment length exceeds series length");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error(ErrorCode::invalid_argument, "overlap must lie in [0, 1)");

  const std::size_t n = segment_len;
  const std::size_t hop = WelchOptions{n, overlap}.hop(n);
  const std::size_t nbins = n / 2 + 1;
  const std::vector<double> window = detail::hann(n);
  double wpow = 0.0;
  for (double w : window) wpow += w * w;

  std::vector<double> in(n);
  std::vector<std::complex<double>> out(nbins);
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE));
  }
  if (!plan) throw Error(ErrorCode::invalid_segment, "could not plan FFT");

  PsdEstimate psd;
  psd.density.assign(nbins, 0.0);
  std::size_t count = 0;
  for (std::size_t start = 0; start + n <= ts.samples.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += ts.samples[start + i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = (ts.samples[start + i] - mean) * window[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < nbins; ++k) psd.density[k] += std::norm(out[k]);
    ++count;
  }
  const double norm = 1.0 / (ts.sample_rate * wpow * static_cast<double>(count));
  psd.freqs.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == nbins - 1);
    psd.density[k] *= norm * (edge ? 1.0 : 2.0);
    psd.freqs[k] = ts.sample_rate * static_cast<double>(k) / static_cast<double>(n);
  }
  psd.segments = count;
  return psd;
}

inline PsdEstimate welch_psd(const TimeSeries& ts, const WelchOptions& opts = {}) {
  if (opts.segment_len == 0 && opts.segments < 1)
    throw Error(ErrorCode::invalid_segment, "segment count must be >= 1");
  return welch_psd(ts, opts.resolved_segment_len(ts.samples.size()), opts.overlap);
}

// Mean of eta over 0 < f <= cutoff.
inline double band_average(std::span<const double> freqs, std::span<const double> eta, double cutoff) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    if (freqs[k] > 0.0 && freqs[k] <= cutoff) {
      sum += eta[k];
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::empty_band, "no PSD bins in (0, " + std::to_string(cutoff) + "] Hz");
  return sum / static_cast<double>(n);
}

inline SensitivityReport sensitivity_spectrum(const PsdEstimate& psd, const ScaleFactor& sf, double dDdT) {
  if (!(std::abs(dDdT) > 0.0)) throw Error(ErrorCode::invalid_argument, "dD/dT must be nonzero");
  if (!(sf.slope_v_per_hz > 0.0)) throw Error(ErrorCode::zero_slope, "scale factor must be positive");
  SensitivityReport rep;
  rep.freqs = psd.freqs;
  rep.eta.resize(psd.density.size());
  const double conv = 1.0 / (sf.slope_v_per_hz * std::abs(dDdT));
  for (std::size_t k = 0; k < psd.density.size(); ++k) rep.eta[k] = std::sqrt(std::max(0.0, psd.density[k])) * conv;
  rep.avg_below_1hz = band_average(rep.freqs, rep.eta, 1.0);
  rep.avg_below_10hz = band_average(rep.freqs, rep.eta, 10.0);
  return rep;
}

inline TimeSeries white_noise_series(double sigma, double sample_rate, std::size_t samples, std::uint64_t seed) {
  TimeSeries ts;
  ts.sample_rate = sample_rate;
  ts.samples.resize(samples);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : ts.samples) v = sigma * noise(rng);
  return ts;
}

}  // namespace nvtherm
