#pragma once

// N-cumulative Lorentzian fits by Levenberg-Marquardt with an analytic
// Jacobian, plus prominence-based initial guesses.
//
// Parameter vector layout: [baseline, center_0, fwhm_0, contrast_0, center_1, ...].
// Internally frequencies are mapped onto [-1, 1] over the grid span so the
// normal matrix stays well scaled.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/errors.hpp"
#include "nvtherm/lineshape.hpp"

namespace nvtherm {

struct FitModel {
  double baseline = 1.0;
  std::vector<LorentzianPeak> peaks;

  std::size_t n_peaks() const { return peaks.size(); }
  std::size_t n_params() const { return 1 + 3 * peaks.size(); }

  std::vector<double> to_vector() const {
    std::vector<double> v{baseline};
    for (const auto& p : peaks) {
      v.push_back(p.center);
      v.push_back(p.fwhm);
      v.push_back(p.contrast);
    }
    return v;
  }

  static FitModel from_vector(std::span<const double> v) {
    if (v.empty() || (v.size() - 1) % 3 != 0)
      throw Error(ErrorCode::invalid_argument, "parameter vector length must be 1 + 3n");
    FitModel m;
    m.baseline = v[0];
    for (std::size_t k = 1; k < v.size(); k += 3) m.peaks.push_back({v[k], v[k + 1], v[k + 2]});
    return m;
  }
};

inline std::vector<std::string> parameter_names(std::size_t n_peaks) {
  std::vector<std::string> out{"baseline"};
  for (std::size_t k = 0; k < n_peaks; ++k) {
    const std::string idx = "[" + std::to_string(k) + "]";
    out.push_back("center" + idx);
    out.push_back("fwhm" + idx);
    out.push_back("contrast" + idx);
  }
  return out;
}

inline double model_eval(const FitModel& model, double f) {
  double v = model.baseline;
  for (const auto& p : model.peaks) v -= p.dip(f);
  return v;
}

// d(model_eval)/df.
inline double model_derivative(const FitModel& model, double f) {
  double v = 0.0;
  for (const auto& p : model.peaks) {
    const double hw = 0.5 * p.fwhm;
    const double d = f - p.center;
    const double den = d * d + hw * hw;
    v += 2.0 * p.contrast * hw * hw * d / (den * den);
  }
  return v;
}

struct FitOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;  // relative to the normal-matrix diagonal
  double rel_residual_tol = 1e-10;
  double rel_step_tol = 1e-8;
  bool shared_fwhm = false;
  double min_fwhm_steps = 2.0;  // lower fwhm bound, in mean grid steps
  double min_prominence = 0.0;  // <= 0: estimated from the noise level
  std::size_t smoothing_window = 5;
};

struct FitResult {
  FitModel model;
  Eigen::MatrixXd covariance;  // physical units, full parameter layout
  double residual_norm = 0.0;  // sqrt(sum of squared residuals)
  double initial_residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  double center_sigma(std::size_t k) const { return std::sqrt(std::max(0.0, covariance(1 + 3 * k, 1 + 3 * k))); }
  double center_covariance(std::size_t a, std::size_t b) const { return covariance(1 + 3 * a, 1 + 3 * b); }
};

// ---------------------------------------------------------------------------
// Peak detection

namespace detail {

inline std::vector<double> moving_average(std::span<const double> y, std::size_t window) {
  const std::size_t n = y.size();
  if (window <= 1 || n == 0) return {y.begin(), y.end()};
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += y[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

inline double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

// Robust noise level from first differences (MAD), divided down by the
// smoothing window.
inline double noise_floor(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> d(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) d[i] = y[i + 1] - y[i];
  const double m = median(d);
  for (double& v : d) v = std::abs(v - m);
  return 1.4826 * median(d) / std::sqrt(2.0);
}

}  // namespace detail

// Eight smoothed-noise standard deviations, at least 1e-4.
inline double auto_prominence(const Spectrum& s, std::size_t smoothing_window = 5) {
  const double w = static_cast<double>(std::max<std::size_t>(1, smoothing_window));
  return std::max(1e-4, 8.0 * detail::noise_floor(s.signal) / std::sqrt(w));
}

struct PeakCandidate {
  LorentzianPeak guess;
  double prominence = 0.0;
};

// Local minima of the smoothed signal ranked by topographic prominence.
inline std::vector<PeakCandidate> detect_peak_candidates(const Spectrum& s, double min_prominence,
                                                         std::size_t smoothing_window = 5) {
  s.validate();
  const std::vector<double> y = detail::moving_average(s.signal, smoothing_window);
  const std::size_t n = y.size();
  const double baseline = detail::median(y);

  std::vector<PeakCandidate> found;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i] < y[i - 1] && y[i] <= y[i + 1])) continue;

    double left_max = y[i];
    std::size_t l = i;
    while (l > 0 && y[l - 1] >= y[i]) left_max = std::max(left_max, y[--l]);
    double right_max = y[i];
    std::size_t r = i;
    while (r + 1 < n && y[r + 1] >= y[i]) right_max = std::max(right_max, y[++r]);
    const double prominence = std::min(left_max, right_max) - y[i];
    if (prominence < min_prominence || prominence <= 0.0) continue;

    // Width at half prominence, linearly interpolated.
    const double level = y[i] + 0.5 * prominence;
    std::size_t a = i;
    while (a > 0 && y[a] < level) --a;
    std::size_t b = i;
    while (b + 1 < n && y[b] < level) ++b;
    auto crossing = [&](std::size_t j0, std::size_t j1) {
      const double y0 = y[j0], y1 = y[j1];
      if (y1 == y0) return s.freqs[j0];
      return s.freqs[j0] + (level - y0) * (s.freqs[j1] - s.freqs[j0]) / (y1 - y0);
    };
    const double f_left = (y[a] >= level) ? crossing(a, a + 1) : s.freqs[a];
    const double f_right = (y[b] >= level) ? crossing(b - 1, b) : s.freqs[b];
    const double step = s.freqs[i + 1] - s.freqs[i - 1];
    const double fwhm = std::max(f_right - f_left, 0.5 * step);
    const double contrast = std::clamp(baseline - y[i], 1e-6, 0.999);
    found.push_back({{s.freqs[i], fwhm, contrast}, prominence});
  }

  // Within fwhm/4 of a deeper candidate: drop.
  std::sort(found.begin(), found.end(),
            [](const PeakCandidate& a, const PeakCandidate& b) { return a.guess.contrast > b.guess.contrast; });
  std::vector<PeakCandidate> kept;
  for (const auto& c : found) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const PeakCandidate& k) {
      return std::abs(k.guess.center - c.guess.center) < 0.25 * k.guess.fwhm;
    });
    if (!clash) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(),
            [](const PeakCandidate& a, const PeakCandidate& b) { return a.guess.center < b.guess.center; });
  return kept;
}

inline std::vector<LorentzianPeak> detect_peaks(const Spectrum& s, double min_prominence,
                                                std::size_t smoothing_window = 5) {
  std::vector<LorentzianPeak> out;
  for (const auto& c : detect_peak_candidates(s, min_prominence, smoothing_window)) out.push_back(c.guess);
  return out;
}

// Exactly n guesses: the n most prominent detections; when fewer are resolved,
// the broadest guess is split into a symmetric pair (unresolved doublets).
inline std::vector<LorentzianPeak> seed_guesses(const Spectrum& s, std::size_t n_peaks, double min_prominence,
                                                std::size_t smoothing_window = 5) {
  auto cand = detect_peak_candidates(s, min_prominence, smoothing_window);
  if (cand.empty()) throw Error(ErrorCode::insufficient_peaks, "no dips found above prominence threshold");
  if (cand.size() > n_peaks) {
    std::sort(cand.begin(), cand.end(),
              [](const PeakCandidate& a, const PeakCandidate& b) { return a.prominence > b.prominence; });
    cand.resize(n_peaks);
  }
  std::vector<LorentzianPeak> g;
  for (const auto& c : cand) g.push_back(c.guess);
  while (g.size() < n_peaks) {
    auto widest = std::max_element(g.begin(), g.end(),
                                   [](const LorentzianPeak& a, const LorentzianPeak& b) { return a.fwhm < b.fwhm; });
    const LorentzianPeak p = *widest;
    g.erase(widest);
    g.push_back({p.center - 0.25 * p.fwhm, 0.7 * p.fwhm, 0.6 * p.contrast});
    g.push_back({p.center + 0.25 * p.fwhm, 0.7 * p.fwhm, 0.6 * p.contrast});
  }
  std::sort(g.begin(), g.end(), [](const LorentzianPeak& a, const LorentzianPeak& b) { return a.center < b.center; });
  return g;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

namespace detail {

class LorentzianProblem {
 public:
  LorentzianProblem(const Spectrum& s, std::size_t n_peaks, bool shared_fwhm, double min_fwhm_steps)
      : n_peaks_(n_peaks), shared_(shared_fwhm && n_peaks > 1) {
    f0_ = 0.5 * (s.freqs.front() + s.freqs.back());
    scale_ = 0.5 * (s.freqs.back() - s.freqs.front());
    min_width_ = std::max(1e-9, min_fwhm_steps * 2.0 / static_cast<double>(s.size() - 1));
    x_.resize(static_cast<Eigen::Index>(s.size()));
    y_.resize(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      x_[static_cast<Eigen::Index>(i)] = (s.freqs[i] - f0_) / scale_;
      y_[static_cast<Eigen::Index>(i)] = s.signal[i];
    }
    // full index -> free index
    const std::size_t nfull = 1 + 3 * n_peaks_;
    free_of_.resize(nfull);
    std::size_t next = 0;
    free_of_[0] = next++;
    for (std::size_t k = 0; k < n_peaks_; ++k) {
      free_of_[1 + 3 * k] = next++;
      free_of_[2 + 3 * k] = (shared_ && k > 0) ? free_of_[2] : next++;
      free_of_[3 + 3 * k] = next++;
    }
    n_free_ = next;
  }

  std::size_t n_free() const { return n_free_; }
  std::size_t n_full() const { return 1 + 3 * n_peaks_; }
  Eigen::Index n_obs() const { return x_.size(); }

  Eigen::VectorXd to_internal_full(const FitModel& m) const {
    Eigen::VectorXd q(static_cast<Eigen::Index>(n_full()));
    q[0] = m.baseline;
    for (std::size_t k = 0; k < n_peaks_; ++k) {
      q[idx(1 + 3 * k)] = (m.peaks[k].center - f0_) / scale_;
      q[idx(2 + 3 * k)] = m.peaks[k].fwhm / scale_;
      q[idx(3 + 3 * k)] = m.peaks[k].contrast;
    }
    return q;
  }

  FitModel to_model(const Eigen::VectorXd& q) const {
    FitModel m;
    m.baseline = q[0];
    for (std::size_t k = 0; k < n_peaks_; ++k) {
      m.peaks.push_back({f0_ + scale_ * q[idx(1 + 3 * k)], scale_ * q[idx(2 + 3 * k)], q[idx(3 + 3 * k)]});
    }
    return m;
  }

  Eigen::VectorXd full_to_free(const Eigen::VectorXd& q) const {
    Eigen::VectorXd z(static_cast<Eigen::Index>(n_free_));
    for (std::size_t i = 0; i < n_full(); ++i) z[idx(free_of_[i])] = q[idx(i)];
    return z;
  }

  Eigen::VectorXd free_to_full(const Eigen::VectorXd& z) const {
    Eigen::VectorXd q(static_cast<Eigen::Index>(n_full()));
    for (std::size_t i = 0; i < n_full(); ++i) q[idx(i)] = z[idx(free_of_[i])];
    return q;
  }

  // d(full)/d(free), a 0/1 matrix.
  Eigen::MatrixXd tie_matrix() const {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(idx(n_full()), idx(n_free_));
    for (std::size_t i = 0; i < n_full(); ++i) t(idx(i), idx(free_of_[i])) = 1.0;
    return t;
  }

  // Box constraints in free coordinates: center inside the grid, fwhm above
  // the resolution floor, contrast in (0, 1).
  void bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr double min_contrast = 1e-12;
    lo = Eigen::VectorXd::Constant(idx(n_free_), -inf);
    hi = Eigen::VectorXd::Constant(idx(n_free_), inf);
    for (std::size_t k = 0; k < n_peaks_; ++k) {
      lo[idx(free_of_[1 + 3 * k])] = -1.0;
      hi[idx(free_of_[1 + 3 * k])] = 1.0;
      lo[idx(free_of_[2 + 3 * k])] = min_width_;
      lo[idx(free_of_[3 + 3 * k])] = min_contrast;
      hi[idx(free_of_[3 + 3 * k])] = 1.0 - min_contrast;
    }
  }

  void project(Eigen::VectorXd& z) const {
    Eigen::VectorXd lo, hi;
    bounds(lo, hi);
    z = z.cwiseMax(lo).cwiseMin(hi);
  }

  Eigen::VectorXd residuals(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd q = free_to_full(z);
    Eigen::VectorXd r(x_.size());
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      double m = q[0];
      for (std::size_t k = 0; k < n_peaks_; ++k) {
        const double hw = 0.5 * q[idx(2 + 3 * k)];
        const double d = x_[i] - q[idx(1 + 3 * k)];
        m -= q[idx(3 + 3 * k)] * hw * hw / (d * d + hw * hw);
      }
      r[i] = y_[i] - m;
    }
    return r;
  }

  // Jacobian of the model (not the residual) w.r.t. the free parameters.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd q = free_to_full(z);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(x_.size(), idx(n_free_));
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      j(i, 0) = 1.0;
      for (std::size_t k = 0; k < n_peaks_; ++k) {
        const double u = q[idx(1 + 3 * k)];
        const double hw = 0.5 * q[idx(2 + 3 * k)];
        const double c = q[idx(3 + 3 * k)];
        const double d = x_[i] - u;
        const double den = d * d + hw * hw;
        j(i, idx(free_of_[1 + 3 * k])) += -2.0 * c * hw * hw * d / (den * den);
        j(i, idx(free_of_[2 + 3 * k])) += -c * hw * d * d / (den * den);
        j(i, idx(free_of_[3 + 3 * k])) += -hw * hw / den;
      }
    }
    return j;
  }

  // Hessian of half the squared residual norm, by central differences of the
  // analytic gradient.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& z) const {
    const Eigen::Index p = z.size();
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      const double step = 1e-6 * std::max(std::abs(z[k]), 1e-2);
      Eigen::VectorXd zp = z, zm = z;
      zp[k] += step;
      zm[k] -= step;
      const Eigen::VectorXd gp = jacobian(zp).transpose() * residuals(zp);
      const Eigen::VectorXd gm = jacobian(zm).transpose() * residuals(zm);
      h.col(k) = -(gp - gm) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
  }

  // Internal -> physical scaling of the full parameter vector.
  Eigen::VectorXd unit_scale() const {
    Eigen::VectorXd s = Eigen::VectorXd::Ones(idx(n_full()));
    for (std::size_t k = 0; k < n_peaks_; ++k) {
      s[idx(1 + 3 * k)] = scale_;
      s[idx(2 + 3 * k)] = scale_;
    }
    return s;
  }

  std::vector<std::string> free_names() const {
    const auto full = parameter_names(n_peaks_);
    std::vector<std::string> out(n_free_);
    for (std::size_t i = n_full(); i-- > 0;) out[free_of_[i]] = full[i];
    return out;
  }

 private:
  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

  std::size_t n_peaks_;
  bool shared_;
  double f0_ = 0.0;
  double scale_ = 1.0;
  double min_width_ = 1e-9;
  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
  std::vector<std::size_t> free_of_;
  std::size_t n_free_ = 0;
};

}  // namespace detail

// Damped least squares from an explicit starting model.
inline FitResult fit_from(const Spectrum& s, const FitModel& start, const FitOptions& opts = {}) {
  s.validate();
  const std::size_t n_peaks = start.n_peaks();
  if (n_peaks < 1) throw Error(ErrorCode::invalid_argument, "n_peaks must be >= 1");

  detail::LorentzianProblem prob(s, n_peaks, opts.shared_fwhm, opts.min_fwhm_steps);
  Eigen::VectorXd z = prob.full_to_free(prob.to_internal_full(start));
  prob.project(z);
  Eigen::VectorXd lower, upper;
  prob.bounds(lower, upper);

  Eigen::VectorXd r = prob.residuals(z);
  double ssr = r.squaredNorm();
  FitResult out;
  out.initial_residual_norm = std::sqrt(ssr);

  double lambda = opts.initial_damping;
  bool converged = ssr == 0.0;
  int it = 0;
  Eigen::MatrixXd jac = prob.jacobian(z);
  Eigen::MatrixXd normal = jac.transpose() * jac;
  Eigen::VectorXd grad = jac.transpose() * r;
  Eigen::MatrixXd hess = prob.hessian(z);

  while (!converged && it < opts.max_iterations) {
    ++it;
    // Parameters sitting on a bound whose gradient or step points outward are
    // held fixed; the reduced system is re-solved until no new one appears.
    const double floor = 1e-30 * std::max(1.0, normal.diagonal().maxCoeff());
    std::vector<bool> pinned(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i)
      pinned[static_cast<std::size_t>(i)] = (z[i] <= lower[i] && grad[i] <= 0.0) || (z[i] >= upper[i] && grad[i] >= 0.0);
    // The damped full Hessian is preferred where positive definite; the
    // Gauss-Newton matrix converges only linearly along curved valleys.
    auto solve = [&](const Eigen::MatrixXd& curv, Eigen::VectorXd& step) {
      for (Eigen::Index pass = 0; pass <= z.size(); ++pass) {
        Eigen::MatrixXd damped = curv;
        Eigen::VectorXd rhs = grad;
        for (Eigen::Index i = 0; i < damped.rows(); ++i) damped(i, i) += lambda * std::max(normal(i, i), floor);
        for (Eigen::Index i = 0; i < damped.rows(); ++i) {
          if (!pinned[static_cast<std::size_t>(i)]) continue;
          damped.row(i).setZero();
          damped.col(i).setZero();
          damped(i, i) = 1.0;
          rhs[i] = 0.0;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(damped);
        if (llt.info() != Eigen::Success) return false;
        step = llt.solve(rhs);
        bool grew = false;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          if (pinned[static_cast<std::size_t>(i)]) continue;
          if ((z[i] <= lower[i] && step[i] < 0.0) || (z[i] >= upper[i] && step[i] > 0.0)) {
            pinned[static_cast<std::size_t>(i)] = true;
            grew = true;
          }
        }
        if (!grew) return true;
      }
      return true;
    };
    Eigen::VectorXd step;
    const std::vector<bool> pinned_start = pinned;
    if (!solve(hess, step)) {
      pinned = pinned_start;
      if (!solve(normal, step)) step = Eigen::VectorXd::Constant(z.size(), std::numeric_limits<double>::quiet_NaN());
    }
    Eigen::VectorXd trial = z + step;
    prob.project(trial);
    step = trial - z;

    if (!step.allFinite()) {
      lambda *= 10.0;
      continue;
    }
    if (step.norm() <= opts.rel_step_tol * z.norm()) {
      converged = true;
      break;
    }
    Eigen::VectorXd r_trial = prob.residuals(trial);
    double ssr_trial = r_trial.squaredNorm();
    if (ssr_trial <= ssr) {
      // Extend along an accepted direction while the residual keeps falling;
      // Gauss-Newton undershoots badly along the soft axis of overlapped doublets.
      for (double alpha = 2.0; alpha <= 1024.0; alpha *= 2.0) {
        Eigen::VectorXd longer = z + alpha * step;
        prob.project(longer);
        Eigen::VectorXd r_longer = prob.residuals(longer);
        const double ssr_longer = r_longer.squaredNorm();
        if (!(ssr_longer < ssr_trial)) break;
        trial = std::move(longer);
        r_trial = std::move(r_longer);
        ssr_trial = ssr_longer;
      }
      const double rel_decrease = ssr > 0.0 ? (ssr - ssr_trial) / ssr : 0.0;
      z = trial;
      r = r_trial;
      ssr = ssr_trial;
      lambda = std::max(lambda / 10.0, 1e-20);
      jac = prob.jacobian(z);
      normal = jac.transpose() * jac;
      grad = jac.transpose() * r;
      hess = prob.hessian(z);
      if (rel_decrease < opts.rel_residual_tol || ssr == 0.0) converged = true;
    } else {
      lambda = std::min(lambda * 10.0, 1e20);
    }
  }

  // Covariance from the Gauss-Newton normal matrix at the solution.
  const Eigen::Index p = normal.rows();
  Eigen::VectorXd d = normal.diagonal();
  std::vector<std::string> collinear;
  const auto names = prob.free_names();
  for (Eigen::Index i = 0; i < p; ++i)
    if (!(d[i] > 0.0)) collinear.push_back(names[static_cast<std::size_t>(i)]);
  if (!collinear.empty()) throw DegenerateFitError(collinear);

  const Eigen::VectorXd dinv = d.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = dinv.asDiagonal() * normal * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.eigenvalues()[0] < 1e-12 * es.eigenvalues()[p - 1]) {
    const Eigen::VectorXd null = es.eigenvectors().col(0);
    const double big = null.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < p; ++i)
      if (std::abs(null[i]) >= 0.2 * big) collinear.push_back(names[static_cast<std::size_t>(i)]);
    throw DegenerateFitError(collinear);
  }
  const Eigen::MatrixXd corr_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                                   es.eigenvectors().transpose();
  const long dof = static_cast<long>(prob.n_obs()) - static_cast<long>(p);
  const double variance = dof > 0 ? ssr / static_cast<double>(dof) : 0.0;
  const Eigen::MatrixXd cov_free = variance * (dinv.asDiagonal() * corr_inv * dinv.asDiagonal());
  const Eigen::MatrixXd tie = prob.tie_matrix();
  const Eigen::VectorXd units = prob.unit_scale();
  Eigen::MatrixXd cov = units.asDiagonal() * (tie * cov_free * tie.transpose()) * units.asDiagonal();
  cov = 0.5 * (cov + cov.transpose()).eval();

  out.model = prob.to_model(prob.free_to_full(z));
  out.covariance = std::move(cov);
  out.residual_norm = std::sqrt(ssr);
  out.iterations = it;
  out.converged = converged;
  return out;
}

// Initial guesses come from `init` when given, otherwise from detect_peaks,
// which must resolve at least n_peaks dips.
inline FitResult fit(const Spectrum& s, std::size_t n_peaks, const std::optional<std::vector<LorentzianPeak>>& init,
                     const FitOptions& opts = {}) {
  s.validate();
  if (n_peaks < 1) throw Error(ErrorCode::invalid_argument, "n_peaks must be >= 1");
  std::vector<LorentzianPeak> guesses;
  if (init) {
    if (init->size() != n_peaks)
      throw Error(ErrorCode::invalid_argument, "init supplies " + std::to_string(init->size()) + " peaks, expected " +
                                                   std::to_string(n_peaks));
    guesses = *init;
  } else {
    const double prom = opts.min_prominence > 0.0 ? opts.min_prominence : auto_prominence(s, opts.smoothing_window);
    const auto found = detect_peak_candidates(s, prom, opts.smoothing_window);
    if (found.size() < n_peaks) {
      throw Error(ErrorCode::insufficient_peaks, "detected " + std::to_string(found.size()) +
                                                     " dips, fit needs " + std::to_string(n_peaks));
    }
    guesses = seed_guesses(s, n_peaks, prom, opts.smoothing_window);
  }
  return fit_from(s, FitModel{detail::median(s.signal), guesses}, opts);
}

inline FitResult fit(const Spectrum& s, std::size_t n_peaks, const FitOptions& opts = {}) {
  return fit(s, n_peaks, std::nullopt, opts);
}

}  // namespace nvtherm
