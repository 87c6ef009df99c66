#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

using namespace iontele;
using namespace iontele::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "iontele-cli");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("iontele_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, UnknownKeyNamesKeyAndLine) {
  const std::string msg = config_error("{\n  \"seed\": 3,\n  \"shotz\": 4\n}\n");
  EXPECT_NE(msg.find("shotz"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;

  const std::string nested = config_error("{\n  \"noise\": {\n\n    \"detection\": 0.1\n  }\n}");
  EXPECT_NE(nested.find("noise.detection"), std::string::npos) << nested;
  EXPECT_NE(nested.find("line 4"), std::string::npos) << nested;
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_NE(config_error("{\"shots\": \"many\"}").find("shots"), std::string::npos);
  EXPECT_NE(config_error("{\"noise\": {\"detection_error\": 2}}").find("detection_error"),
            std::string::npos);
  EXPECT_NE(config_error("{\n\"seed\": 1,\n").find("line"), std::string::npos);
  EXPECT_FALSE(config_error("{\"inputs\": [{\"label\": \"a b\", \"theta_chi\": 1, \"phi_chi\": 0}]}")
                   .empty());
  EXPECT_FALSE(config_error("{\"phase_offset\": \"soon\"}").empty());
  EXPECT_TRUE(config_error("{\"phase_offset\": \"calibrate\"}").empty());
}

TEST(Config, Precedence) {
  const ExperimentConfig defaults;
  ExperimentConfig c = parse_config(R"({"seed": 5, "shots": 77, "noise": {"detection_error": 0.1}})");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.shots, 77u);
  EXPECT_EQ(c.noise.detection_error, 0.1);
  EXPECT_EQ(c.noise.depolarizing_per_pulse, defaults.noise.depolarizing_per_pulse);
  EXPECT_EQ(c.bootstrap_resamples, defaults.bootstrap_resamples);

  Overrides o;
  o.seed = 9;
  apply_overrides(c, o);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.shots, 77u);
}

TEST(Config, CalibratedPresetLoads) {
  const ExperimentConfig c = load_config(std::string(IONTELE_SOURCE_DIR) + "/configs/paper.json");
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(c.input_list().size(), 6u);
  EXPECT_EQ(c.protocol.fock_cutoff, 7);
}

TEST(Cli, HelpListsEveryKey) {
  const Result r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const auto& k : config_keys()) {
    EXPECT_NE(r.out.find(k.key), std::string::npos) << k.key;
    EXPECT_NE(r.out.find("[" + k.unit + "]"), std::string::npos) << k.key;
  }
}

TEST(Cli, ConfigDocCoversEveryKey) {
  const std::string doc = slurp(std::string(IONTELE_SOURCE_DIR) + "/docs/config.md");
  for (const auto& k : config_keys()) {
    EXPECT_NE(doc.find("`" + k.key + "`"), std::string::npos) << k.key;
  }
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  const fs::path bad = write_file(dir, "bad.json", "{\n  \"seed\": 3,\n  \"shotz\": 4\n}\n");
  Result r = invoke({"--config", bad.string(), "teleport"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

  EXPECT_EQ(invoke({"--shots", "-4", "teleport"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"--out", (dir / "none").string()}).code, 2);

  const fs::path mode = write_file(dir, "mode.json", R"({"mode": "baseline"})");
  EXPECT_EQ(invoke({"--config", mode.string(), "teleport"}).code, 2);

  // Gate noise pushes motional population past the default budget at a small cutoff.
  const fs::path leak = write_file(
      dir, "leak.json",
      R"({"fock_cutoff": 3, "inputs": [{"label": "a", "theta_chi": 1.0, "phi_chi": 0.0}],
          "noise": {"depolarizing_per_pulse": 0.05}})");
  r = invoke({"--config", leak.string(), "--exact", "--out", (dir / "leak").string(), "teleport"});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, ConfigModeRunsWithoutSubcommand) {
  const fs::path dir = scratch("mode");
  const fs::path cfg = write_file(dir, "c.json", R"({"mode": "baseline", "baseline_samples": 1000})");
  const Result r = invoke({"--config", cfg.string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "o" / "baseline.json"));
}

TEST(Cli, TeleportIsDeterministic) {
  const fs::path dir = scratch("det");
  const fs::path cfg = write_file(dir, "c.json", R"({"fock_cutoff": 7,
      "inputs": [{"label": "a", "theta_chi": 1.0, "phi_chi": 0.3},
                 {"label": "b", "theta_chi": 2.0, "phi_chi": 4.0}],
      "noise": {"depolarizing_per_pulse": 0.015, "detuning_sigma_SD": 0.0007,
                "detection_error": 0.01}})");
  for (const char* run_dir : {"a", "b"}) {
    const Result r = invoke({"--config", cfg.string(), "--seed", "17", "--shots", "300",
                             "--workers", "1", "--out", (dir / run_dir).string(), "teleport"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"fidelities.csv", "fidelity_bars.csv", "teleport_summary.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_FALSE(slurp(dir / "a" / f).empty()) << f;
  }
  const Result other = invoke({"--config", cfg.string(), "--seed", "18", "--shots", "300",
                               "--workers", "1", "--out", (dir / "c").string(), "teleport"});
  ASSERT_EQ(other.code, 0);
  EXPECT_NE(slurp(dir / "a" / "fidelities.csv"), slurp(dir / "c" / "fidelities.csv"));
}

TEST(Cli, ExactStateTomographyIsExactWithoutNoise) {
  const fs::path dir = scratch("state");
  const Result r = invoke({"--exact", "--out", dir.string(), "state-tomo"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(dir / "state_tomography.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "input_label,fidelity,trace_distance,purity,iterations,converged");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string label, fid, td;
    std::getline(ss, label, ',');
    std::getline(ss, fid, ',');
    std::getline(ss, td, ',');
    EXPECT_LE(std::stod(td), 1e-6) << label;
    ++rows;
  }
  EXPECT_EQ(rows, 6);
  const auto rho = read_json(dir / "rho_psi3.json");
  EXPECT_EQ(rho["dim"], 2);
}

TEST(Cli, ExactProcessTomographyIsIdentityWithoutNoise) {
  const fs::path dir = scratch("proc");
  const Result r = invoke({"--exact", "--out", dir.string(), "proc-tomo"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(dir / "process_report.json");
  EXPECT_GE(report["chi_II"].get<double>(), 0.999);
  EXPECT_TRUE(report["converged"].get<bool>());
  EXPECT_TRUE(report["bootstrap_stddev"].is_null());
  for (const char* f : {"chi.json", "chi_bars.csv", "affine.json", "ellipsoid.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
}

TEST(Cli, SampledProcessTomographyReportsBootstrap) {
  const fs::path dir = scratch("proc_sampled");
  const fs::path cfg = write_file(dir, "c.json", R"({"bootstrap_resamples": 5,
      "noise": {"depolarizing_per_pulse": 0.01}, "fock_cutoff": 7})");
  const Result r = invoke({"--config", cfg.string(), "--shots", "2000", "--out",
                           (dir / "o").string(), "proc-tomo"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(dir / "o" / "process_report.json");
  ASSERT_TRUE(report["bootstrap_stddev"].is_object());
  EXPECT_GT(report["bootstrap_stddev"]["chi_II"].get<double>(), 0.0);
  EXPECT_LT(report["chi_II"].get<double>(), 1.0);
}

TEST(Cli, CalibrateAndExportSequence) {
  const fs::path dir = scratch("cal");
  Result r = invoke({"--out", dir.string(), "calibrate"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cal = read_json(dir / "calibration.json");
  EXPECT_NEAR(cal["fidelity"].get<double>(), 1.0, 1e-9);

  r = invoke({"--out", dir.string(), "export-sequence"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "sequence.txt"), r.out);
  EXPECT_EQ(r.out, slurp(std::string(IONTELE_TEST_DATA) + "/sequence_psi1.txt"));
}
