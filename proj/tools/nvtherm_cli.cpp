// nvtherm: command-line front end for the ODMR thermometry pipeline.
//
//   nvtherm pipeline  --config run.cfg [--out report.json] [--out-dir plots/]
//   nvtherm simulate  --config run.cfg --out-dir work/
//   nvtherm fit       --config work/config.cfg --manifest work/manifest.csv [--out-dir work/]
//   nvtherm calibrate --config work/config.cfg --records work/records.csv [--out-dir work/]
//   nvtherm sense     --config work/config.cfg --spectrum work/spectrum_t0_r0.csv
//                     --calibration cal.json [--timeseries work/timeseries.csv]
//
// Every subcommand prints one JSON document (stdout or --out). Exit status is
// 0 on success, 1 on usage errors and a stage-specific code otherwise.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nvtherm/nvtherm.hpp"

namespace {

using nvtherm::json;
using nvtherm::Stage;
using nvtherm::StageError;
using nvtherm::run_stage;
namespace io = nvtherm::io;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
  std::optional<std::string> mode;
  std::optional<std::size_t> threads;
  std::string out_path;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool out_dir_required = false) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--seed", o.seed, "override the configured seed");
  cmd->add_option("--repeats", o.repeats, "override the Monte-Carlo repeat count");
  cmd->add_option("--mode", o.mode, "override the readout mode")->check(CLI::IsMember({"zfs", "zeeman"}));
  cmd->add_option("--threads", o.threads, "worker threads (0: all cores)");
  cmd->add_option("--out", o.out_path, "write the JSON report here instead of stdout");
  auto* dir = cmd->add_option("--out-dir", o.out_dir, "directory for CSV output");
  if (out_dir_required) dir->required();
}

nvtherm::RunConfig load(const CommonOptions& o) {
  return run_stage(Stage::config, [&] {
    nvtherm::RunConfig cfg = o.config_path.empty() ? nvtherm::RunConfig{} : nvtherm::load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.repeats) cfg.repeats = *o.repeats;
    if (o.mode) nvtherm::apply_config_key(cfg, "mode", *o.mode);
    if (o.threads) cfg.threads = *o.threads;
    cfg.validate();
    return cfg;
  });
}

void emit(const CommonOptions& o, const json& report) {
  const std::string text = report.dump(2) + "\n";
  if (o.out_path.empty()) {
    std::cout << text;
  } else {
    run_stage(Stage::io, [&] { io::write_file(o.out_path, text); });
  }
}

void make_dir(const std::string& dir) {
  if (!dir.empty()) run_stage(Stage::io, [&] { std::filesystem::create_directories(dir); });
}

std::string spectrum_name(std::size_t ti, std::size_t r) {
  return "spectrum_t" + std::to_string(ti) + "_r" + std::to_string(r) + ".csv";
}

// Runs body() and turns a stage failure into an error report and exit code.
// Results gathered in `partial` before the failure are kept in the report.
template <class F>
int guarded(const CommonOptions& o, F&& body, json* partial = nullptr) {
  try {
    body();
    return 0;
  } catch (const StageError& e) {
    json report = partial ? *partial : json::object();
    report["status"] = "error";
    report["error"] = {{"stage", nvtherm::to_string(e.stage())}, {"message", e.what()}};
    std::cerr << "nvtherm: " << nvtherm::to_string(e.stage()) << " stage failed: " << e.what() << "\n";
    try {
      emit(o, report);
    } catch (const StageError&) {
      std::cout << report.dump(2) << "\n";
    }
    return nvtherm::exit_code(e.stage());
  }
}

int cmd_pipeline(const CommonOptions& o) {
  nvtherm::RunConfig cfg;
  const int rc = guarded(o, [&] { cfg = load(o); });
  if (rc != 0) return rc;
  const auto res = nvtherm::run_pipeline(cfg, o.out_dir.empty() ? std::nullopt : std::optional<std::string>(o.out_dir));
  if (res.exit_status != 0) std::cerr << "nvtherm: " << res.report["error"]["message"].get<std::string>() << "\n";
  const int io_rc = guarded(o, [&] { emit(o, res.report); });
  return res.exit_status != 0 ? res.exit_status : io_rc;
}

int cmd_simulate(const CommonOptions& o) {
  return guarded(o, [&] {
    const auto cfg = load(o);
    make_dir(o.out_dir);
    io::Table manifest;
    manifest.columns = {"temperature_index", "temperature_k", "repeat"};
    for (std::size_t ti = 0; ti < cfg.temperatures_k.size(); ++ti) {
      const double T = cfg.temperatures_k[ti];
      std::vector<nvtherm::Spectrum> spectra(cfg.repeats);
      nvtherm::parallel_for(cfg.repeats, cfg.threads, [&](std::size_t r) {
        spectra[r] = run_stage(Stage::simulate, [&] {
          return nvtherm::simulate_spectrum(cfg, T, nvtherm::derive_seed(cfg.seed, r, ti));
        });
      });
      run_stage(Stage::io, [&] {
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
          io::save_spectrum_csv(o.out_dir + "/" + spectrum_name(ti, r), spectra[r]);
          manifest.rows.push_back({static_cast<double>(ti), T, static_cast<double>(r)});
        }
      });
    }
    json report{{"status", "ok"}, {"mode", nvtherm::to_string(cfg.mode)}, {"spectra", manifest.rows.size()}};
    run_stage(Stage::io, [&] {
      io::save_table_csv(o.out_dir + "/manifest.csv", manifest);
      std::string text;
      for (const auto& [k, v] : nvtherm::config_entries(cfg)) text += k + " = " + v + "\n";
      io::write_file(o.out_dir + "/config.cfg", text);
    });
    if (cfg.has_sense_stage()) {
      const auto ts = run_stage(Stage::sense, [&] { return nvtherm::sense_series(cfg); });
      run_stage(Stage::io, [&] { io::save_timeseries_csv(o.out_dir + "/timeseries.csv", ts); });
      report["timeseries"] = "timeseries.csv";
    }
    emit(o, report);
  });
}

int cmd_fit(const CommonOptions& o, const std::string& manifest_path) {
  json report;
  return guarded(o, [&] {
    const auto cfg = load(o);
    make_dir(o.out_dir);
    const auto manifest = run_stage(Stage::io, [&] { return io::load_table_csv(manifest_path); });
    const std::string base = std::filesystem::path(manifest_path).parent_path().string();
    const std::string dir = base.empty() ? "." : base;

    // Group manifest rows by temperature index, preserving order.
    std::vector<double> temps;
    std::vector<std::vector<std::size_t>> repeats;
    for (const auto& row : manifest.rows) {
      const auto ti = static_cast<std::size_t>(row.at(0));
      if (ti >= temps.size()) {
        temps.resize(ti + 1);
        repeats.resize(ti + 1);
      }
      temps[ti] = row.at(1);
      repeats[ti].push_back(static_cast<std::size_t>(row.at(2)));
    }

    report = {{"status", "ok"}, {"mode", nvtherm::to_string(cfg.mode)}, {"temperatures", json::array()}};
    io::Table records;
    records.columns = {"temperature_k", "repeat", "D_hz", "sigma_D_hz"};
    for (std::size_t ti = 0; ti < temps.size(); ++ti) {
      const auto& reps = repeats[ti];
      if (reps.empty()) continue;
      nvtherm::TemperatureResult tr{temps[ti], std::vector<nvtherm::SpectrumAnalysis>(reps.size())};
      std::vector<nvtherm::Spectrum> spectra(reps.size());
      nvtherm::parallel_for(reps.size(), cfg.threads, [&](std::size_t k) {
        spectra[k] = run_stage(Stage::io, [&] { return io::load_spectrum_csv(dir + "/" + spectrum_name(ti, reps[k])); });
        tr.repeats[k] = run_stage(Stage::fit, [&] { return nvtherm::analyze_spectrum(spectra[k], cfg.mode, cfg.fit); });
      });
      const auto summary = nvtherm::summarize_by_temperature(nvtherm::records_of({tr})).front();
      report["temperatures"].push_back(nvtherm::temperature_json(tr, summary, cfg.D_at(tr.T)));
      for (std::size_t k = 0; k < reps.size(); ++k) {
        const auto& e = tr.repeats[k].extraction;
        records.rows.push_back({tr.T, static_cast<double>(reps[k]), e.D, e.sigma_D});
      }
      if (!o.out_dir.empty())
        run_stage(Stage::io, [&] { nvtherm::write_fit_csvs(o.out_dir, ti, spectra.front(), tr.repeats.front().fit); });
    }
    if (!o.out_dir.empty()) run_stage(Stage::io, [&] { io::save_table_csv(o.out_dir + "/records.csv", records); });
    emit(o, report);
  }, &report);
}

int cmd_calibrate(const CommonOptions& o, const std::string& records_path) {
  return guarded(o, [&] {
    const auto cfg = load(o);
    make_dir(o.out_dir);
    const auto table = run_stage(Stage::io, [&] { return io::load_table_csv(records_path); });
    const auto cal = run_stage(Stage::calibrate, [&] {
      if (table.columns.size() != 4 || table.columns[0] != "temperature_k" || table.columns[2] != "D_hz" ||
          table.columns[3] != "sigma_D_hz")
        throw nvtherm::ParseError(1, "records header must be temperature_k,repeat,D_hz,sigma_D_hz");
      std::vector<nvtherm::CalibrationRecord> records;
      for (const auto& row : table.rows) {
        nvtherm::DExtraction e;
        e.D = row[2];
        e.sigma_D = row[3];
        e.mode = cfg.mode;
        records.push_back({row[0], e});
      }
      return nvtherm::calibrate_records(records, cfg.mode);
    });
    if (!o.out_dir.empty()) run_stage(Stage::io, [&] { nvtherm::write_calibration_csv(o.out_dir, cal); });
    emit(o, {{"status", "ok"}, {"mode", nvtherm::to_string(cfg.mode)}, {"calibration", nvtherm::calibration_json(cal)}});
  });
}

int cmd_sense(const CommonOptions& o, const std::string& spectrum_path, const std::string& timeseries_path,
              const std::string& calibration_path) {
  return guarded(o, [&] {
    auto cfg = load(o);
    if (!timeseries_path.empty()) cfg.timeseries_path = timeseries_path;
    make_dir(o.out_dir);
    const auto spectrum = run_stage(Stage::io, [&] { return io::load_spectrum_csv(spectrum_path); });
    const auto reference = run_stage(Stage::fit, [&] { return nvtherm::analyze_spectrum(spectrum, cfg.mode, cfg.fit); });
    double slope = 0.0;
    if (!cfg.dDdT_override_hz_per_k) {
      slope = run_stage(Stage::io, [&] {
        const json cal = json::parse(io::read_file(calibration_path));
        const json& block = cal.contains("calibration") ? cal.at("calibration") : cal;
        return block.at("slope_hz_per_k").get<double>();
      });
    }
    const auto sense = run_stage(Stage::sense, [&] {
      if (!cfg.has_sense_stage()) throw nvtherm::Error(nvtherm::ErrorCode::insufficient_data, "no time series given");
      const auto ts = nvtherm::sense_series(cfg);
      return nvtherm::run_sense(reference.fit.model, ts, cfg.dDdT_override_hz_per_k.value_or(slope), cfg);
    });
    if (!o.out_dir.empty()) run_stage(Stage::io, [&] { nvtherm::write_eta_csv(o.out_dir, sense.report); });
    emit(o, {{"status", "ok"}, {"mode", nvtherm::to_string(cfg.mode)}, {"sensitivity", nvtherm::to_json(sense)}});
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-center ODMR thermometry toolkit"};
  app.require_subcommand(1);

  CommonOptions pipeline_opts, simulate_opts, fit_opts, calibrate_opts, sense_opts;
  std::string manifest, records, spectrum, timeseries, calibration;

  auto* pipeline = app.add_subcommand("pipeline", "simulate, fit, calibrate and sense in one run");
  add_common(pipeline, pipeline_opts);

  auto* simulate = app.add_subcommand("simulate", "synthesize spectra and the sensitivity time series");
  add_common(simulate, simulate_opts, true);

  auto* fit = app.add_subcommand("fit", "fit every spectrum listed in a manifest");
  add_common(fit, fit_opts);
  fit->add_option("--manifest", manifest, "manifest.csv written by simulate")->required();

  auto* calibrate = app.add_subcommand("calibrate", "linear D(T) calibration from fitted records");
  add_common(calibrate, calibrate_opts);
  calibrate->add_option("--records", records, "records.csv written by fit")->required();

  auto* sense = app.add_subcommand("sense", "temperature sensitivity spectrum");
  add_common(sense, sense_opts);
  sense->add_option("--spectrum", spectrum, "reference spectrum CSV")->required();
  sense->add_option("--timeseries", timeseries, "voltage time-series CSV");
  sense->add_option("--calibration", calibration, "calibration JSON written by calibrate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*pipeline) return cmd_pipeline(pipeline_opts);
  if (*simulate) return cmd_simulate(simulate_opts);
  if (*fit) return cmd_fit(fit_opts, manifest);
  if (*calibrate) return cmd_calibrate(calibrate_opts, records);
  if (sense_opts.config_path.empty() && calibration.empty()) {
    std::cerr << "sense: --calibration or a config with sense.dDdT_hz_per_k is required\n";
    return 1;
  }
  return cmd_sense(sense_opts, spectrum, timeseries, calibration);
}
