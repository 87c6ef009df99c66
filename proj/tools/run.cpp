#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "iontele/errors.hpp"

namespace iontele::cli {

namespace {

std::string key_table() {
  std::ostringstream os;
  os << "\nConfiguration keys (JSON file given with --config):\n";
  std::size_t width = 0;
  for (const auto& k : config_keys()) width = std::max(width, k.key.size());
  for (const auto& k : config_keys()) {
    os << "  " << k.key << std::string(width + 2 - k.key.size(), ' ') << "[" << k.unit << "] "
       << k.description << '\n';
  }
  os << "\nExit codes: 0 success, 2 configuration error, 3 numerical invariant violation, "
        "4 non-convergence.\n";
  return os.str();
}

using Command = std::function<ExitCode(const ExperimentConfig&, std::ostream&)>;

const std::map<std::string, std::pair<Command, std::string>>& commands() {
  static const std::map<std::string, std::pair<Command, std::string>> table{
      {"teleport", {cmd_teleport, "fidelity per input, exact and sampled"}},
      {"state-tomo", {cmd_state_tomo, "output density matrices by maximum likelihood"}},
      {"proc-tomo", {cmd_proc_tomo, "process matrix, affine map and ellipsoid of the channel"}},
      {"calibrate", {cmd_calibrate, "sweep the reconstruction phase offset"}},
      {"baseline", {cmd_baseline, "classical measure-and-resend limit"}},
      {"export-sequence", {cmd_export_sequence, "print the pulse sequence listing"}},
  };
  return table;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trapped-ion teleportation simulator"};
  app.footer(key_table());
  app.require_subcommand(0, 1);

  std::string config_path;
  std::uint64_t seed = 0, shots = 0;
  std::string out_dir;
  int workers = 0;
  bool exact = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  auto* shots_opt = app.add_option("--shots", shots, "shots per input and basis")
                        ->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (0: every core)")
                          ->check(CLI::NonNegativeNumber);
  app.add_flag("--exact", exact, "infinite-statistics mode");
  for (const auto& [name, entry] : commands()) {
    app.add_subcommand(name, entry.second)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Config);
  }

  try {
    ExperimentConfig config;
    if (!config_path.empty()) config = load_config(config_path);
    Overrides o;
    if (*seed_opt) o.seed = seed;
    if (*shots_opt) o.shots = shots;
    if (*out_opt) o.out = out_dir;
    if (*workers_opt) o.workers = workers;
    o.exact = exact;
    apply_overrides(config, o);
    validate_config(config);

    std::string name = config.mode;
    const auto chosen = app.get_subcommands();
    if (!chosen.empty()) {
      name = chosen.front()->get_name();
      if (!config.mode.empty() && config.mode != name) {
        throw ConfigError("config 'mode' is \"" + config.mode + "\" but subcommand " + name +
                          " was given");
      }
    }
    const auto it = commands().find(name);
    if (it == commands().end()) {
      throw ConfigError(name.empty() ? "no subcommand given (see --help)"
                                     : "unknown mode \"" + name + "\"");
    }
    return static_cast<int>(it->second.first(config, out));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Config);
  } catch (const ConvergenceError& e) {
    err << "non-convergence: " << e.what() << '\n';
    return static_cast<int>(ExitCode::NonConvergence);
  } catch (const InvariantViolation& e) {
    err << "invariant violation: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Invariant);
  } catch (const DimensionError& e) {
    err << "invariant violation: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Invariant);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::Invariant);
  }
}

}  // namespace iontele::cli
