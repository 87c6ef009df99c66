#pragma once

// Experiment runner: configuration, subcommands and output files.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iontele/noise_model.hpp"
#include "iontele/protocol.hpp"

namespace iontele::cli {

/// Bad configuration: unknown key, wrong type, out-of-range value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExitCode : int { Ok = 0, Config = 2, Invariant = 3, NonConvergence = 4 };

enum class ProcessInputs { Reconstructed, Ideal };

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::uint64_t shots = 10000;
  bool exact = false;
  int workers = 0;  // 0: hardware concurrency
  std::optional<double> phase_offset = 0.0;  // nullopt: calibrate first
  std::vector<protocol::InputStateSpec> inputs;  // empty: six canonical
  std::filesystem::path output_dir = "out";
  std::string mode;
  noise::NoiseConfig noise;
  protocol::ProtocolOptions protocol;
  ProcessInputs process_inputs = ProcessInputs::Reconstructed;
  int bootstrap_resamples = 200;
  int calibration_points = 64;
  std::string calibration_input = "psi3";
  int ellipsoid_resolution = 24;
  int baseline_samples = 100000;

  const std::vector<protocol::InputStateSpec>& input_list() const;
  int worker_count() const;
};

struct KeyDoc {
  std::string key;
  std::string unit;
  std::string description;
};

/// Every accepted key (dotted path) with its unit; drives --help and the docs.
const std::vector<KeyDoc>& config_keys();

/// Parses JSON text over `base`. Unknown keys, type errors and invalid values
/// raise ConfigError naming the key and its line.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> shots;
  std::optional<std::filesystem::path> out;
  std::optional<int> workers;
  bool exact = false;
};

void apply_overrides(ExperimentConfig& config, const Overrides& overrides);

/// Cross-field checks after all sources are merged.
void validate_config(const ExperimentConfig& config);

// Subcommands. Each writes into config.output_dir and a short report to `out`.
ExitCode cmd_teleport(const ExperimentConfig& config, std::ostream& out);
ExitCode cmd_state_tomo(const ExperimentConfig& config, std::ostream& out);
ExitCode cmd_proc_tomo(const ExperimentConfig& config, std::ostream& out);
ExitCode cmd_calibrate(const ExperimentConfig& config, std::ostream& out);
ExitCode cmd_baseline(const ExperimentConfig& config, std::ostream& out);
ExitCode cmd_export_sequence(const ExperimentConfig& config, std::ostream& out);

/// Full command line entry point; maps exceptions to exit codes.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace iontele::cli
