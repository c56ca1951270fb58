#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "nvtherm/io.hpp"
#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::string kCli = NVTHERM_CLI_PATH;
const std::string kConfigs = NVTHERM_CONFIG_DIR;

struct Run {
  int status;
  std::string out;
};

Run run(const std::string& args) {
  const auto out_path = fs::temp_directory_path() / "nvtherm_cli_stdout.txt";
  const std::string cmd = kCli + " " + args + " > " + out_path.string() + " 2>/dev/null";
  const int raw = std::system(cmd.c_str());
  Run r{WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, nvtherm::io::read_file(out_path.string())};
  fs::remove(out_path);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nvtherm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("usage errors", "[cli]") {
  CHECK(run("--help").status == 0);
  CHECK(run("").status == 1);
  CHECK(run("pipeline --no-such-flag").status == 1);
  CHECK(run("pipeline --mode sideways").status == 1);
  CHECK(run("simulate --config " + kConfigs + "/quick.cfg").status == 1);
}

TEST_CASE("configuration errors exit with the config code and a JSON report", "[cli]") {
  const auto dir = fresh_dir("badcfg");
  nvtherm::io::write_file((dir / "bad.cfg").string(), "mode = zeeman\nline.fwhm_hz = -3\n");
  const auto r = run("pipeline --config " + (dir / "bad.cfg").string());
  CHECK(r.status == 2);
  const auto j = json::parse(r.out);
  CHECK(j["status"] == "error");
  CHECK(j["error"]["stage"] == "config");

  nvtherm::io::write_file((dir / "typo.cfg").string(), "mode = zeeman\nline.fwhm = 9e6\n");
  CHECK(run("pipeline --config " + (dir / "typo.cfg").string()).status == 2);
  CHECK(run("pipeline --config " + (dir / "missing.cfg").string()).status == 2);
  fs::remove_all(dir);
}

TEST_CASE("subcommands chain to the pipeline result value for value", "[cli]") {
  const auto dir = fresh_dir("chain");
  const std::string cfg = kConfigs + "/quick.cfg";
  const std::string d = dir.string();

  const auto p = run("pipeline --config " + cfg + " --out " + d + "/pipeline.json --out-dir " + d + "/plots");
  REQUIRE(p.status == 0);
  const auto pipe = json::parse(nvtherm::io::read_file(d + "/pipeline.json"));

  REQUIRE(run("simulate --config " + cfg + " --out-dir " + d + "/work").status == 0);
  const std::string work = d + "/work";
  REQUIRE(fs::exists(work + "/manifest.csv"));
  REQUIRE(fs::exists(work + "/timeseries.csv"));
  REQUIRE(run("fit --config " + work + "/config.cfg --manifest " + work + "/manifest.csv --out " + d +
              "/fit.json --out-dir " + work)
              .status == 0);
  REQUIRE(run("calibrate --config " + work + "/config.cfg --records " + work + "/records.csv --out " + d +
              "/cal.json")
              .status == 0);
  REQUIRE(run("sense --config " + work + "/config.cfg --spectrum " + work + "/spectrum_t0_r0.csv --timeseries " +
              work + "/timeseries.csv --calibration " + d + "/cal.json --out " + d + "/sense.json")
              .status == 0);

  const auto fitj = json::parse(nvtherm::io::read_file(d + "/fit.json"));
  const auto calj = json::parse(nvtherm::io::read_file(d + "/cal.json"));
  const auto sensej = json::parse(nvtherm::io::read_file(d + "/sense.json"));

  CHECK(fitj["temperatures"] == pipe["temperatures"]);
  CHECK(calj["calibration"] == pipe["calibration"]);
  CHECK(sensej["sensitivity"] == pipe["sensitivity"]);

  for (const char* f : {"dt.csv", "eta.csv", "fitcurve_t0.csv", "spectrum_t0.csv"})
    CHECK(fs::exists(fs::path(d) / "plots" / f));
  fs::remove_all(dir);
}

TEST_CASE("flag overrides", "[cli]") {
  const std::string cfg = kConfigs + "/quick.cfg";
  const auto base = json::parse(run("pipeline --config " + cfg).out);
  const auto reseeded = json::parse(run("pipeline --config " + cfg + " --seed 99").out);
  CHECK(base["config"]["seed"] == "7");
  CHECK(reseeded["config"]["seed"] == "99");
  CHECK(base["calibration"] != reseeded["calibration"]);

  const auto fewer = json::parse(run("pipeline --config " + cfg + " --repeats 2").out);
  CHECK(fewer["temperatures"][0]["repeats"] == 2);

  // The quick configuration has no strain, so the zero-field fit sees one dip.
  const auto zfs = run("pipeline --config " + cfg + " --mode zfs");
  CHECK(json::parse(zfs.out)["mode"] == "zfs");
}

TEST_CASE("stage failures in subcommands", "[cli]") {
  const auto dir = fresh_dir("stages");
  const std::string d = dir.string();
  CHECK(run("fit --config " + kConfigs + "/quick.cfg --manifest " + d + "/none.csv").status == 7);

  nvtherm::io::write_file(d + "/records.csv", "temperature_k,repeat,D_hz,sigma_D_hz\n298,0,2.87e9,1e3\n298,1,2.87e9,1e3\n");
  const auto r = run("calibrate --config " + kConfigs + "/quick.cfg --records " + d + "/records.csv");
  CHECK(r.status == 5);
  CHECK(json::parse(r.out)["error"]["stage"] == "calibrate");
  fs::remove_all(dir);
}
