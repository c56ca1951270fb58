#pragma once

// Run configuration: flat `key = value` text with dotted section keys.
// Blank lines and `#` comments are ignored. See docs/config_keys.md.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nvtherm/calibration.hpp"
#include "nvtherm/errors.hpp"
#include "nvtherm/fitting.hpp"
#include "nvtherm/io.hpp"
#include "nvtherm/sensitivity.hpp"
#include "nvtherm/spin_model.hpp"

namespace nvtherm {

struct RunConfig {
  Mode mode = Mode::zeeman;
  std::uint64_t seed = 1;
  std::size_t repeats = 1;
  std::size_t threads = 0;  // 0: hardware concurrency

  SpinParams spin;  // spin.D_hz is D at the reference temperature
  double field_magnitude_t = 5e-3;
  Vec3 field_direction{1.0, 1.0, 1.0};

  double fwhm_hz = 9e6;
  double contrast = 0.02;  // zeeman: per axis; zfs: total over the E doublet

  std::optional<double> grid_center_hz;
  double grid_half_span_hz = 250e6;
  std::size_t grid_points = 601;

  double noise_sigma = 0.0;

  std::vector<double> temperatures_k{298.0, 303.0, 308.0, 313.0, 318.0, 323.0};
  double true_slope_hz_per_k = -75.33e3;

  FitOptions fit;
  WelchOptions welch;

  std::string timeseries_path;
  double synthetic_sigma_v = 0.0;  // > 0: synthesize white voltage noise
  double sample_rate_hz = 100.0;
  std::size_t samples = 65536;
  double volts_per_unit = 1.0;
  std::optional<double> dDdT_override_hz_per_k;

  double D_at(double T) const { return spin.D + true_slope_hz_per_k * (T - kReferenceTemperatureK); }
  bool has_sense_stage() const { return synthetic_sigma_v > 0.0 || !timeseries_path.empty(); }

  // Throws Error(invalid_argument) naming the offending key.
  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw Error(ErrorCode::invalid_argument, key + ": " + why);
    };
    if (repeats < 1) fail("repeats", "must be >= 1");
    if (!(spin.D > 0.0)) fail("spin.D_hz", "must be positive");
    if (!(spin.E >= 0.0)) fail("spin.E_hz", "must be >= 0");
    if (!(spin.gamma_e > 0.0)) fail("spin.gamma_e_hz_per_t", "must be positive");
    if (!(field_magnitude_t >= 0.0)) fail("field.magnitude_t", "must be >= 0");
    if (!(norm(field_direction) > 0.0)) fail("field.direction", "must be a nonzero vector");
    if (mode == Mode::zeeman && !(spin.gamma_e * field_magnitude_t < 0.5 * spin.D))
      fail("field.magnitude_t", "gamma_e*|B| must stay below D/2");
    if (!(fwhm_hz > 0.0)) fail("line.fwhm_hz", "must be positive");
    if (!(contrast > 0.0 && contrast < 1.0)) fail("line.contrast", "must lie in (0, 1)");
    if (grid_points < 8) fail("grid.points", "must be >= 8");
    if (!(grid_half_span_hz > 0.0)) fail("grid.half_span_hz", "must be positive");
    if (!(noise_sigma >= 0.0)) fail("noise.sigma", "must be >= 0");
    if (temperatures_k.empty()) fail("calibration.temperatures_k", "must list at least one temperature");
    for (double t : temperatures_k)
      if (!(t >= 100.0 && t <= 700.0)) fail("calibration.temperatures_k", "temperatures must lie in 100-700 K");
    if (fit.max_iterations < 1) fail("fit.max_iterations", "must be >= 1");
    if (welch.segment_len != 0 && welch.segment_len < 8) fail("welch.segment_len", "must be 0 (automatic) or >= 8");
    if (welch.segments < 1) fail("welch.segments", "must be >= 1");
    if (!(welch.overlap >= 0.0 && welch.overlap < 1.0)) fail("welch.overlap", "must lie in [0, 1)");
    if (!(synthetic_sigma_v >= 0.0)) fail("sense.synthetic_sigma_v", "must be >= 0");
    if (!(sample_rate_hz > 0.0)) fail("sense.sample_rate_hz", "must be positive");
    if (synthetic_sigma_v > 0.0 && welch.resolved_segment_len(samples) < 8)
      fail("sense.samples", "too short for one Welch segment of >= 8 samples");
    if (synthetic_sigma_v > 0.0 && samples < welch.resolved_segment_len(samples))
      fail("sense.samples", "must be >= welch.segment_len");
    if (dDdT_override_hz_per_k && *dDdT_override_hz_per_k == 0.0) fail("sense.dDdT_hz_per_k", "must be nonzero");
  }
};

namespace detail {

inline Mode parse_mode(std::string_view v, std::size_t line) {
  if (v == "zeeman") return Mode::zeeman;
  if (v == "zfs" || v == "zero_field") return Mode::zero_field;
  throw ParseError(line, "mode must be 'zeeman' or 'zfs', got '" + std::string(v) + "'");
}

inline bool parse_bool(std::string_view v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(line, "expected true/false, got '" + std::string(v) + "'");
}

inline std::size_t parse_count(std::string_view v, std::size_t line) {
  const double d = io::parse_double(v, line);
  if (!(d >= 0.0) || d != static_cast<double>(static_cast<std::uint64_t>(d)))
    throw ParseError(line, "expected a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(d);
}

inline std::vector<double> parse_list(std::string_view v, std::size_t line) {
  std::vector<double> out;
  for (auto cell : io::split(v, ',')) out.push_back(io::parse_double(cell, line));
  return out;
}

}  // namespace detail

// Applies one key to `cfg`. Returns false for unknown keys.
inline bool apply_config_key(RunConfig& cfg, std::string_view key, std::string_view value, std::size_t line = 0) {
  using namespace detail;
  auto num = [&] { return io::parse_double(value, line); };
  if (key == "mode") cfg.mode = parse_mode(value, line);
  else if (key == "seed") cfg.seed = parse_count(value, line);
  else if (key == "repeats") cfg.repeats = parse_count(value, line);
  else if (key == "threads") cfg.threads = parse_count(value, line);
  else if (key == "spin.D_hz") cfg.spin.D = num();
  else if (key == "spin.E_hz") cfg.spin.E = num();
  else if (key == "spin.gamma_e_hz_per_t") cfg.spin.gamma_e = num();
  else if (key == "field.magnitude_t") cfg.field_magnitude_t = num();
  else if (key == "field.direction") {
    const auto v = parse_list(value, line);
    if (v.size() != 3) throw ParseError(line, "field.direction needs 3 components");
    cfg.field_direction = {v[0], v[1], v[2]};
  } else if (key == "line.fwhm_hz") cfg.fwhm_hz = num();
  else if (key == "line.contrast") cfg.contrast = num();
  else if (key == "grid.center_hz") cfg.grid_center_hz = num();
  else if (key == "grid.half_span_hz") cfg.grid_half_span_hz = num();
  else if (key == "grid.points") cfg.grid_points = parse_count(value, line);
  else if (key == "noise.sigma") cfg.noise_sigma = num();
  else if (key == "calibration.temperatures_k") cfg.temperatures_k = parse_list(value, line);
  else if (key == "calibration.true_slope_hz_per_k") cfg.true_slope_hz_per_k = num();
  else if (key == "fit.max_iterations") cfg.fit.max_iterations = static_cast<int>(parse_count(value, line));
  else if (key == "fit.shared_fwhm") cfg.fit.shared_fwhm = parse_bool(value, line);
  else if (key == "fit.min_prominence") cfg.fit.min_prominence = num();
  else if (key == "fit.smoothing_window") cfg.fit.smoothing_window = parse_count(value, line);
  else if (key == "welch.segment_len") cfg.welch.segment_len = parse_count(value, line);
  else if (key == "welch.segments") cfg.welch.segments = parse_count(value, line);
  else if (key == "welch.overlap") cfg.welch.overlap = num();
  else if (key == "sense.timeseries") cfg.timeseries_path = std::string(value);
  else if (key == "sense.synthetic_sigma_v") cfg.synthetic_sigma_v = num();
  else if (key == "sense.sample_rate_hz") cfg.sample_rate_hz = num();
  else if (key == "sense.samples") cfg.samples = parse_count(value, line);
  else if (key == "sense.volts_per_unit") cfg.volts_per_unit = num();
  else if (key == "sense.dDdT_hz_per_k") cfg.dDdT_override_hz_per_k = num();
  else return false;
  return true;
}

inline RunConfig parse_config(const std::string& text, RunConfig cfg = {}) {
  const auto lines = io::lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = io::trim(lines[i]);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ParseError(i + 1, "expected key=value");
    const auto key = io::trim(l.substr(0, eq));
    const auto value = io::trim(l.substr(eq + 1));
    if (!apply_config_key(cfg, key, value, i + 1)) throw ParseError(i + 1, "unknown key '" + std::string(key) + "'");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) { return parse_config(io::read_file(path)); }

// Canonical key/value listing, in documentation order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  using io::format_double;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  std::vector<std::pair<std::string, std::string>> e{
      {"mode", to_string(c.mode)},
      {"seed", std::to_string(c.seed)},
      {"repeats", std::to_string(c.repeats)},
      {"spin.D_hz", format_double(c.spin.D)},
      {"spin.E_hz", format_double(c.spin.E)},
      {"spin.gamma_e_hz_per_t", format_double(c.spin.gamma_e)},
      {"field.magnitude_t", format_double(c.field_magnitude_t)},
      {"field.direction", list({c.field_direction.x, c.field_direction.y, c.field_direction.z})},
      {"line.fwhm_hz", format_double(c.fwhm_hz)},
      {"line.contrast", format_double(c.contrast)},
      {"grid.half_span_hz", format_double(c.grid_half_span_hz)},
      {"grid.points", std::to_string(c.grid_points)},
      {"noise.sigma", format_double(c.noise_sigma)},
      {"calibration.temperatures_k", list(c.temperatures_k)},
      {"calibration.true_slope_hz_per_k", format_double(c.true_slope_hz_per_k)},
      {"fit.max_iterations", std::to_string(c.fit.max_iterations)},
      {"fit.shared_fwhm", c.fit.shared_fwhm ? "true" : "false"},
      {"fit.min_prominence", format_double(c.fit.min_prominence)},
      {"fit.smoothing_window", std::to_string(c.fit.smoothing_window)},
      {"welch.segment_len", std::to_string(c.welch.segment_len)},
      {"welch.overlap", format_double(c.welch.overlap)},
      {"welch.segments", std::to_string(c.welch.segments)},
      {"sense.timeseries", c.timeseries_path},
      {"sense.synthetic_sigma_v", format_double(c.synthetic_sigma_v)},
      {"sense.sample_rate_hz", format_double(c.sample_rate_hz)},
      {"sense.samples", std::to_string(c.samples)},
      {"sense.volts_per_unit", format_double(c.volts_per_unit)},
  };
  if (c.grid_center_hz) e.emplace_back("grid.center_hz", format_double(*c.grid_center_hz));
  if (c.dDdT_override_hz_per_k) e.emplace_back("sense.dDdT_hz_per_k", format_double(*c.dDdT_override_hz_per_k));
  return e;
}

}  // namespace nvtherm
