#pragma once

// End-to-end orchestration: simulate -> fit -> calibrate -> sense, producing
// a JSON report and plot-ready CSVs. The CLI subcommands reuse the same stage
// functions so a chained run reproduces the pipeline value-for-value.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "nvtherm/calibration.hpp"
#include "nvtherm/config.hpp"
#include "nvtherm/fitting.hpp"
#include "nvtherm/io.hpp"
#include "nvtherm/lineshape.hpp"
#include "nvtherm/sensitivity.hpp"

namespace nvtherm {

using json = nlohmann::ordered_json;

enum class Stage { config, simulate, fit, calibrate, sense, io };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::simulate: return "simulate";
    case Stage::fit: return "fit";
    case Stage::calibrate: return "calibrate";
    case Stage::sense: return "sense";
    case Stage::io: return "io";
  }
  return "unknown";
}

// Process exit status per failing stage; 0 is success, 1 is reserved for usage errors.
inline int exit_code(Stage s) {
  switch (s) {
    case Stage::config: return 2;
    case Stage::simulate: return 3;
    case Stage::fit: return 4;
    case Stage::calibrate: return 5;
    case Stage::sense: return 6;
    case Stage::io: return 7;
  }
  return 1;
}

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

// Runs body(stage) and rethrows any failure as a StageError.
template <class F>
auto run_stage(Stage stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// ---------------------------------------------------------------------------
// Seeds and parallel repeats

// Independent stream per (repeat, temperature); repeat r starts from seed + r.
inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t repeat, std::uint64_t stream) {
  const std::uint64_t base = seed + repeat;
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline constexpr std::uint64_t kSenseStream = 0x53454e5345ULL;

// Calls body(i) for i in [0, n); exceptions are rethrown in index order.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Stages

inline std::vector<double> config_grid(const RunConfig& cfg) {
  return uniform_grid(cfg.grid_center_hz.value_or(cfg.spin.D), cfg.grid_half_span_hz, cfg.grid_points);
}

inline SpinParams spin_at(const RunConfig& cfg, double T) {
  SpinParams p = cfg.spin;
  p.D = cfg.D_at(T);
  p.B = cfg.mode == Mode::zeeman ? normalized(cfg.field_direction) * cfg.field_magnitude_t : Vec3{};
  return p;
}

inline Spectrum simulate_spectrum(const RunConfig& cfg, double T, std::uint64_t seed) {
  const SpinParams p = spin_at(cfg, T);
  const auto grid = config_grid(cfg);
  if (cfg.mode == Mode::zeeman)
    return zeeman_spectrum(p, NVAxisSet::tetrahedral(), cfg.fwhm_hz, cfg.contrast, grid, cfg.noise_sigma, seed);
  return zero_field_spectrum(p, cfg.fwhm_hz, cfg.contrast, grid, cfg.noise_sigma, seed);
}

struct SpectrumAnalysis {
  FitResult fit;
  DExtraction extraction;
};

// Zeeman mode fits the 4 dips of a [111] bias field; any fifth dip of
// comparable prominence means the field is misaligned and the outer pair
// cannot be identified. Zero-field mode fits an E doublet, split from one
// detected dip when unresolved.
inline SpectrumAnalysis analyze_spectrum(const Spectrum& s, Mode mode, const FitOptions& opts) {
  const double prom = opts.min_prominence > 0.0 ? opts.min_prominence : auto_prominence(s, opts.smoothing_window);
  SpectrumAnalysis out;
  if (mode == Mode::zeeman) {
    auto cand = detect_peak_candidates(s, prom, opts.smoothing_window);
    if (cand.size() < 4)
      throw Error(ErrorCode::insufficient_peaks, "expected 4 resolved dips, found " + std::to_string(cand.size()));
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.prominence > b.prominence; });
    if (cand.size() > 4 && cand[4].prominence >= 0.5 * cand[3].prominence) {
      throw Error(ErrorCode::insufficient_peaks, "found " + std::to_string(cand.size()) +
                                                     " comparable dips; bias field not along a single NV axis");
    }
    std::vector<LorentzianPeak> init;
    for (std::size_t i = 0; i < 4; ++i) init.push_back(cand[i].guess);
    std::sort(init.begin(), init.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
    out.fit = fit(s, 4, init, opts);
  } else {
    out.fit = fit(s, 2, seed_guesses(s, 2, prom, opts.smoothing_window), opts);
  }
  out.extraction = extract_D(out.fit, mode);
  return out;
}

inline TimeSeries sense_series(const RunConfig& cfg) {
  if (!cfg.timeseries_path.empty()) return io::load_timeseries_csv(cfg.timeseries_path);
  return white_noise_series(cfg.synthetic_sigma_v, cfg.sample_rate_hz, cfg.samples,
                            derive_seed(cfg.seed, 0, kSenseStream));
}

// Zeeman mode parks on the outer (single-axis) dips.
inline ScaleFactor mode_scale_factor(const FitModel& model, Mode mode, double volts_per_unit) {
  return scale_factor(mode == Mode::zeeman ? outer_pair_model(model) : model, volts_per_unit);
}

struct SenseOutcome {
  ScaleFactor sf;
  double dDdT = 0.0;
  PsdEstimate psd;
  SensitivityReport report;
};

inline SenseOutcome run_sense(const FitModel& reference, const TimeSeries& ts, double dDdT, const RunConfig& cfg) {
  SenseOutcome out;
  out.sf = mode_scale_factor(reference, cfg.mode, cfg.volts_per_unit);
  out.dDdT = dDdT;
  out.psd = welch_psd(ts, cfg.welch);
  out.report = sensitivity_spectrum(out.psd, out.sf, dDdT);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const FitResult& f) {
  json peaks = json::array();
  for (const auto& p : f.model.peaks) peaks.push_back({{"center_hz", p.center}, {"fwhm_hz", p.fwhm}, {"contrast", p.contrast}});
  json cov = json::array();
  for (Eigen::Index i = 0; i < f.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < f.covariance.cols(); ++j) row.push_back(f.covariance(i, j));
    cov.push_back(std::move(row));
  }
  return {{"baseline", f.model.baseline},
          {"peaks", std::move(peaks)},
          {"parameter_names", parameter_names(f.model.n_peaks())},
          {"covariance", std::move(cov)},
          {"residual_norm", f.residual_norm},
          {"initial_residual_norm", f.initial_residual_norm},
          {"iterations", f.iterations},
          {"converged", f.converged}};
}

inline json to_json(const DExtraction& e) {
  json j{{"mode", to_string(e.mode)}, {"D_hz", e.D}, {"sigma_D_hz", e.sigma_D}};
  j[e.mode == Mode::zeeman ? "half_splitting_hz" : "E_hz"] = e.E_or_Bsplit;
  if (e.mode == Mode::zeeman) {
    j["inner_midpoint_hz"] = e.inner_midpoint;
    j["asymmetry_warning"] = e.asymmetry_warning;
  }
  return j;
}

inline json to_json(const CalibrationFit& c) {
  return {{"slope_hz_per_k", c.slope},
          {"abs_slope_hz_per_k", std::abs(c.slope)},
          {"slope_sigma_hz_per_k", c.slope_sigma},
          {"intercept_hz", c.intercept},
          {"intercept_sigma_hz", c.intercept_sigma},
          {"T0_k", c.T0},
          {"residual_std_hz", c.residual_std},
          {"temperatures_k", c.temperatures},
          {"residuals_hz", c.residuals}};
}

inline json to_json(const SenseOutcome& s) {
  return {{"scale_factor_v_per_hz", s.sf.slope_v_per_hz},
          {"park_freq_hz", s.sf.park_freq},
          {"dDdT_hz_per_k", s.dDdT},
          {"psd_segments", s.psd.segments},
          {"psd_bin_width_hz", s.psd.bin_width()},
          {"avg_below_1hz_k_per_rthz", s.report.avg_below_1hz},
          {"avg_below_10hz_k_per_rthz", s.report.avg_below_10hz}};
}

inline json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

struct TemperatureResult {
  double T = 0.0;
  std::vector<SpectrumAnalysis> repeats;
};

inline json temperature_json(const TemperatureResult& t, const TemperatureSummary& s, std::optional<double> D_true) {
  json j{{"T_k", t.T}};
  if (D_true) j["D_true_hz"] = *D_true;
  std::size_t warnings = 0;
  for (const auto& a : t.repeats) warnings += a.extraction.asymmetry_warning ? 1 : 0;
  j["repeats"] = t.repeats.size();
  j["D_hz"] = s.Ds;
  j["sigma_D_hz"] = s.sigmas;
  j["mean_D_hz"] = s.mean_D;
  j["std_D_hz"] = s.std_D;
  j["sigma_mean_hz"] = s.sigma_mean;
  j["asymmetry_warnings"] = warnings;
  j["extraction"] = to_json(t.repeats.front().extraction);
  j["fit"] = to_json(t.repeats.front().fit);
  return j;
}

inline std::vector<CalibrationRecord> records_of(const std::vector<TemperatureResult>& temps) {
  std::vector<CalibrationRecord> out;
  for (const auto& t : temps)
    for (const auto& a : t.repeats) out.push_back({t.T, a.extraction});
  return out;
}

// Records (possibly several per temperature) -> averaged calibration.
struct CalibrationOutcome {
  std::vector<TemperatureSummary> summaries;
  CalibrationFit fit;
};

inline CalibrationOutcome calibrate_records(const std::vector<CalibrationRecord>& records, Mode mode) {
  CalibrationOutcome out;
  out.summaries = summarize_by_temperature(records);
  const auto averaged = averaged_records(out.summaries, mode);
  out.fit = fit_DT(averaged);
  return out;
}

inline json calibration_json(const CalibrationOutcome& c) {
  json j = to_json(c.fit);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& s : c.summaries) {
    lo = std::min(lo, s.std_D);
    hi = std::max(hi, s.std_D);
  }
  j["min_std_D_hz"] = lo;
  j["max_std_D_hz"] = hi;
  return j;
}

// ---------------------------------------------------------------------------
// CSV emission

inline void write_fit_csvs(const std::string& dir, std::size_t index, const Spectrum& s, const FitResult& f) {
  io::save_spectrum_csv(dir + "/spectrum_t" + std::to_string(index) + ".csv", s);
  io::Table t;
  t.columns = {"frequency_hz", "signal", "fit"};
  for (std::size_t i = 0; i < s.size(); ++i) t.rows.push_back({s.freqs[i], s.signal[i], model_eval(f.model, s.freqs[i])});
  io::save_table_csv(dir + "/fitcurve_t" + std::to_string(index) + ".csv", t);
}

inline void write_calibration_csv(const std::string& dir, const CalibrationOutcome& c) {
  io::Table t;
  t.columns = {"temperature_k", "D_hz", "sigma_D_hz", "fit_hz", "residual_hz"};
  for (std::size_t i = 0; i < c.summaries.size(); ++i) {
    const auto& s = c.summaries[i];
    t.rows.push_back({s.T_ref, s.mean_D, s.sigma_mean, c.fit.predict(s.T_ref), c.fit.residuals[i]});
  }
  io::save_table_csv(dir + "/dt.csv", t);
}

inline void write_eta_csv(const std::string& dir, const SensitivityReport& r) {
  io::Table t;
  t.columns = {"frequency_hz", "eta_k_per_rthz"};
  for (std::size_t i = 0; i < r.freqs.size(); ++i) t.rows.push_back({r.freqs[i], r.eta[i]});
  io::save_table_csv(dir + "/eta.csv", t);
}

// ---------------------------------------------------------------------------

struct PipelineResult {
  json report;
  int exit_status = 0;
};

// Never throws for stage failures: the report carries status "error", the
// failing stage and its cause, with every completed temperature preserved.
inline PipelineResult run_pipeline(const RunConfig& cfg, const std::optional<std::string>& out_dir = std::nullopt) {
  PipelineResult res;
  json& rep = res.report;
  rep["status"] = "ok";
  rep["mode"] = to_string(cfg.mode);
  rep["config"] = config_json(cfg);
  rep["temperatures"] = json::array();

  try {
    run_stage(Stage::config, [&] { cfg.validate(); });
    if (out_dir) run_stage(Stage::io, [&] { std::filesystem::create_directories(*out_dir); });

    std::vector<TemperatureResult> temps;
    for (std::size_t ti = 0; ti < cfg.temperatures_k.size(); ++ti) {
      const double T = cfg.temperatures_k[ti];
      TemperatureResult tr{T, std::vector<SpectrumAnalysis>(cfg.repeats)};
      std::vector<Spectrum> first(1);
      parallel_for(cfg.repeats, cfg.threads, [&](std::size_t r) {
        const Spectrum s = run_stage(Stage::simulate, [&] { return simulate_spectrum(cfg, T, derive_seed(cfg.seed, r, ti)); });
        tr.repeats[r] = run_stage(Stage::fit, [&] { return analyze_spectrum(s, cfg.mode, cfg.fit); });
        if (r == 0) first[0] = s;
      });
      const auto summary = summarize_by_temperature(records_of({tr})).front();
      rep["temperatures"].push_back(temperature_json(tr, summary, cfg.D_at(T)));
      if (out_dir) run_stage(Stage::io, [&] { write_fit_csvs(*out_dir, ti, first[0], tr.repeats.front().fit); });
      temps.push_back(std::move(tr));
    }

    const auto cal = run_stage(Stage::calibrate, [&] { return calibrate_records(records_of(temps), cfg.mode); });
    rep["calibration"] = calibration_json(cal);
    if (out_dir) run_stage(Stage::io, [&] { write_calibration_csv(*out_dir, cal); });

    if (cfg.has_sense_stage()) {
      const auto sense = run_stage(Stage::sense, [&] {
        const TimeSeries ts = sense_series(cfg);
        const double dDdT = cfg.dDdT_override_hz_per_k.value_or(cal.fit.slope);
        return run_sense(temps.front().repeats.front().fit.model, ts, dDdT, cfg);
      });
      rep["sensitivity"] = to_json(sense);
      if (out_dir) run_stage(Stage::io, [&] { write_eta_csv(*out_dir, sense.report); });
    }
  } catch (const StageError& e) {
    rep["status"] = "error";
    rep["error"] = {{"stage", to_string(e.stage())}, {"message", e.what()}};
    res.exit_status = exit_code(e.stage());
  }
  return res;
}

}  // namespace nvtherm
