#include <catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "nvtherm/pipeline.hpp"

using namespace nvtherm;
using Catch::Matchers::WithinRel;

namespace {

RunConfig zeeman_config() {
  RunConfig c;
  c.mode = Mode::zeeman;
  c.fwhm_hz = 9e6;
  c.contrast = 0.02;
  c.noise_sigma = 0.0;
  c.threads = 2;
  return c;
}

RunConfig zfs_config() {
  RunConfig c = zeeman_config();
  c.mode = Mode::zero_field;
  c.spin.E = 5e6;
  c.fwhm_hz = 21e6;
  return c;
}

std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("nvtherm_pipeline_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("noiseless Zeeman pipeline recovers the slope", "[pipeline]") {
  const auto res = run_pipeline(zeeman_config());
  REQUIRE(res.exit_status == 0);
  const auto& rep = res.report;
  CHECK(rep["status"] == "ok");
  CHECK(rep["temperatures"].size() == 6);
  CHECK_THAT(rep["calibration"]["abs_slope_hz_per_k"].get<double>(), WithinRel(75.33e3, 1e-6));
  CHECK(rep["calibration"]["slope_hz_per_k"].get<double>() < 0.0);
  for (const auto& t : rep["temperatures"]) {
    CHECK_THAT(t["mean_D_hz"].get<double>(), WithinRel(t["D_true_hz"].get<double>(), 1e-9));
    CHECK(t["fit"]["peaks"].size() == 4);
    CHECK(t["fit"]["covariance"].size() == 13);
  }
}

TEST_CASE("noiseless ZFS pipeline recovers the slope", "[pipeline]") {
  const auto res = run_pipeline(zfs_config());
  REQUIRE(res.exit_status == 0);
  CHECK_THAT(res.report["calibration"]["abs_slope_hz_per_k"].get<double>(), WithinRel(75.33e3, 1e-4));
  for (const auto& t : res.report["temperatures"]) CHECK_THAT(t["extraction"]["E_hz"].get<double>(), WithinRel(5e6, 1e-3));
}

TEST_CASE("noisy repeats: the double peak scatters more at every temperature", "[pipeline][montecarlo]") {
  auto zee = zeeman_config();
  auto zfs = zfs_config();
  for (auto* c : {&zee, &zfs}) {
    c->noise_sigma = 1e-3;
    c->repeats = 30;
    c->threads = 4;
  }
  const auto a = run_pipeline(zee);
  const auto b = run_pipeline(zfs);
  REQUIRE(a.exit_status == 0);
  REQUIRE(b.exit_status == 0);
  for (std::size_t i = 0; i < 6; ++i) {
    const double s_zee = a.report["temperatures"][i]["std_D_hz"].get<double>();
    const double s_zfs = b.report["temperatures"][i]["std_D_hz"].get<double>();
    CHECK(s_zee > 0.0);
    CHECK(s_zfs > s_zee);
  }
  CHECK_THAT(a.report["calibration"]["abs_slope_hz_per_k"].get<double>(), WithinRel(75.33e3, 0.05));
}

TEST_CASE("reports are bit-identical for a fixed seed", "[pipeline]") {
  auto c = zfs_config();
  c.noise_sigma = 1e-3;
  c.repeats = 8;
  c.synthetic_sigma_v = 1e-6;
  c.samples = 8192;
  c.threads = 1;
  const auto one = run_pipeline(c).report.dump();
  c.threads = 4;
  const auto four = run_pipeline(c).report.dump();
  CHECK(one == four);
  CHECK(run_pipeline(c).report.dump() == four);
  c.seed = 2;
  CHECK(run_pipeline(c).report.dump() != four);
}

TEST_CASE("derived seeds", "[pipeline]") {
  std::set<std::uint64_t> seen;
  for (std::size_t r = 0; r < 100; ++r)
    for (std::uint64_t stream = 0; stream < 6; ++stream) seen.insert(derive_seed(11, r, stream));
  CHECK(seen.size() == 100 * 6);
  CHECK(derive_seed(7, 3, 1) == derive_seed(7, 3, 1));
  CHECK(derive_seed(7, 3, 1) == derive_seed(10, 0, 1));
}

TEST_CASE("sense stage reports band averages", "[pipeline]") {
  auto c = zeeman_config();
  c.synthetic_sigma_v = 1e-5;
  c.samples = 16384;
  const auto res = run_pipeline(c);
  REQUIRE(res.exit_status == 0);
  const auto& s = res.report["sensitivity"];
  const double sf = s["scale_factor_v_per_hz"].get<double>();
  CHECK_THAT(sf, WithinRel(3.0 * std::sqrt(3.0) / 4.0 * 0.01 / 9e6, 1e-3));
  // Flat density 2 sigma^2 / fs.
  const double eta = std::sqrt(2.0 * 1e-10 / 100.0) / (sf * 75.33e3);
  CHECK_THAT(s["avg_below_10hz_k_per_rthz"].get<double>(), WithinRel(eta, 0.1));
  CHECK_THAT(s["dDdT_hz_per_k"].get<double>(), WithinRel(-75.33e3, 1e-6));
}

TEST_CASE("stage errors carry stage, exit code and partial results", "[pipeline]") {
  SECTION("config") {
    auto c = zeeman_config();
    c.fwhm_hz = -1.0;
    const auto res = run_pipeline(c);
    CHECK(res.exit_status == 2);
    CHECK(res.report["status"] == "error");
    CHECK(res.report["error"]["stage"] == "config");
    CHECK(res.report["error"]["message"].get<std::string>().find("line.fwhm_hz") != std::string::npos);
  }
  SECTION("simulate") {
    auto c = zeeman_config();
    c.field_direction = {0.0, 0.0, 1.0};
    const auto res = run_pipeline(c);
    CHECK(res.exit_status == 3);
    CHECK(res.report["error"]["stage"] == "simulate");
  }
  SECTION("fit, with earlier temperatures preserved") {
    auto c = zeeman_config();
    c.grid_center_hz = 2.87e9;
    c.grid_half_span_hz = 150e6;
    c.temperatures_k = {298.0, 303.0, 700.0};
    const auto res = run_pipeline(c);
    CHECK(res.exit_status == 4);
    CHECK(res.report["error"]["stage"] == "fit");
    CHECK(res.report["temperatures"].size() == 2);
    CHECK_FALSE(res.report.contains("calibration"));
  }
  SECTION("calibrate") {
    auto c = zeeman_config();
    c.temperatures_k = {298.0, 298.0, 298.0};
    const auto res = run_pipeline(c);
    CHECK(res.exit_status == 5);
    CHECK(res.report["error"]["stage"] == "calibrate");
    CHECK(res.report["temperatures"].size() == 3);
  }
  SECTION("sense") {
    auto c = zeeman_config();
    c.timeseries_path = "/nonexistent/noise.csv";
    const auto res = run_pipeline(c);
    CHECK(res.exit_status == 6);
    CHECK(res.report["error"]["stage"] == "sense");
    CHECK(res.report.contains("calibration"));
  }
  SECTION("io") {
    const auto res = run_pipeline(zeeman_config(), std::string("/proc/nvtherm_cannot_create"));
    CHECK(res.exit_status == 7);
    CHECK(res.report["error"]["stage"] == "io");
  }
}

TEST_CASE("emitted CSVs re-ingest", "[pipeline][io]") {
  auto c = zeeman_config();
  c.synthetic_sigma_v = 1e-5;
  c.samples = 4096;
  const auto dir = scratch_dir("csv");
  const auto res = run_pipeline(c, dir);
  REQUIRE(res.exit_status == 0);

  const auto s = io::load_spectrum_csv(dir + "/spectrum_t0.csv");
  CHECK(s.size() == 601);
  const auto curve = io::load_table_csv(dir + "/fitcurve_t5.csv");
  CHECK(curve.columns == std::vector<std::string>{"frequency_hz", "signal", "fit"});
  CHECK(curve.rows.size() == 601);

  const auto dt = io::load_table_csv(dir + "/dt.csv");
  REQUIRE(dt.rows.size() == 6);
  const auto& temps = res.report["temperatures"];
  for (std::size_t i = 0; i < 6; ++i) CHECK(dt.rows[i][1] == temps[i]["mean_D_hz"].get<double>());
  const auto residuals = res.report["calibration"]["residuals_hz"].get<std::vector<double>>();
  CHECK(dt.column(4) == residuals);

  const auto eta = io::load_table_csv(dir + "/eta.csv");
  CHECK(eta.rows.size() == c.welch.resolved_segment_len(c.samples) / 2 + 1);
  CHECK(res.report["sensitivity"]["psd_segments"] == 8);
  std::filesystem::remove_all(dir);
}
