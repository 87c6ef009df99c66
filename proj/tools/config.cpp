#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cli.hpp"

namespace iontele::cli {

using nlohmann::json;

const std::vector<protocol::InputStateSpec>& ExperimentConfig::input_list() const {
  static const std::vector<protocol::InputStateSpec> canonical(
      protocol::canonical_inputs().begin(), protocol::canonical_inputs().end());
  return inputs.empty() ? canonical : inputs;
}

int ExperimentConfig::worker_count() const {
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> keys{
      {"seed", "integer", "master seed of every random stream"},
      {"shots", "shots per setting", "Monte-Carlo repetitions per input and basis"},
      {"exact", "bool", "infinite-statistics mode (expected counts, no sampling)"},
      {"workers", "threads", "shot-level worker threads; 0 uses every core"},
      {"fock_cutoff", "Fock levels", "motional truncation (>= 2)"},
      {"leakage_budget", "population", "largest tolerated top-Fock population"},
      {"phase_offset", "rad or \"calibrate\"", "reconstruction phase offset"},
      {"inputs", "\"six-canonical\" or list", "input states: [{label, theta_chi, phi_chi}]"},
      {"inputs[].label", "text", "name used in output files"},
      {"inputs[].theta_chi", "rad", "preparation pulse area"},
      {"inputs[].phi_chi", "rad", "preparation pulse phase"},
      {"output_dir", "path", "directory receiving the output files"},
      {"mode", "subcommand name", "subcommand to run when none is given on the command line"},
      {"standby_us", "us", "stand-by between Bell preparation and teleportation"},
      {"rephase_wait_us", "us", "wait after the Bell measurement"},
      {"spin_echo", "bool", "keep the spin-echo pulses"},
      {"dephasing_nodes", "nodes", "Gauss-Hermite nodes per detuning in exact mode"},
      {"process_inputs", "\"reconstructed\" or \"ideal\"", "input states used by proc-tomo"},
      {"bootstrap_resamples", "resamples", "parametric bootstrap size for proc-tomo error bars"},
      {"calibration_points", "grid points", "phase grid size for calibrate (>= 8)"},
      {"calibration_input", "input label", "reference input for phase calibration"},
      {"ellipsoid_resolution", "grid lines", "latitude/longitude count of the ellipsoid mesh"},
      {"baseline_samples", "samples", "Haar Monte-Carlo samples for the baseline check"},
      {"noise.detuning_sigma_SD", "rad/us", "std-dev of the quasi-static S-D detuning"},
      {"noise.static_detuning_SD", "rad/us", "systematic S-D detuning"},
      {"noise.dephasing_ratio_H", "dimensionless", "extra detuning factor of the hide level"},
      {"noise.amplitude_error_sigma", "fraction", "relative std-dev of every pulse area"},
      {"noise.depolarizing_per_pulse", "probability", "depolarizing strength after each pulse"},
      {"noise.detection_error", "probability", "chance a reported outcome is flipped"},
      {"noise.correlated_dephasing", "bool", "one detuning shared by all ions"},
      {"noise.durations.carrier_pi_us", "us", "carrier pi-pulse duration"},
      {"noise.durations.sideband_pi_us", "us", "blue-sideband pi-pulse duration"},
      {"noise.durations.hide_pi_us", "us", "hide pi-pulse duration"},
      {"noise.durations.detection_us", "us", "fluorescence detection duration"},
  };
  return keys;
}

namespace {

int line_at(const std::string& text, std::size_t pos) {
  pos = std::min(pos, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

/// Line of `"key":` searched from `from`; 0 when not found.
std::size_t key_position(const std::string& text, const std::string& key, std::size_t from) {
  const std::string quoted = "\"" + key + "\"";
  std::size_t pos = from;
  while ((pos = text.find(quoted, pos)) != std::string::npos) {
    std::size_t after = pos + quoted.size();
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == ':') return pos;
    pos += quoted.size();
  }
  return std::string::npos;
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& path, std::size_t pos, const std::string& what) const {
    std::ostringstream os;
    os << "config";
    if (pos != std::string::npos) os << " line " << line_at(text_, pos);
    os << ": '" << path << "': " << what;
    throw ConfigError(os.str());
  }

  // Visits every member of `obj`; unknown keys fail with their line.
  void members(const json& obj, const std::string& prefix, std::size_t from,
               const std::map<std::string, std::function<void(const json&, const std::string&,
                                                              std::size_t)>>& handlers) const {
    if (!obj.is_object()) fail(prefix.empty() ? "<root>" : prefix, from, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      const std::size_t pos = key_position(text_, key, from == std::string::npos ? 0 : from);
      const auto it = handlers.find(key);
      if (it == handlers.end()) fail(path, pos, "unknown key");
      it->second(value, path, pos);
    }
  }

  double number(const json& v, const std::string& path, std::size_t pos) const {
    if (!v.is_number()) fail(path, pos, "expected a number");
    return v.get<double>();
  }
  double non_negative(const json& v, const std::string& path, std::size_t pos) const {
    const double x = number(v, path, pos);
    if (!(x >= 0.0)) fail(path, pos, "must be >= 0");
    return x;
  }
  double probability(const json& v, const std::string& path, std::size_t pos) const {
    const double x = number(v, path, pos);
    if (!(x >= 0.0 && x <= 1.0)) fail(path, pos, "must lie in [0, 1]");
    return x;
  }
  std::int64_t integer(const json& v, const std::string& path, std::size_t pos,
                       std::int64_t min) const {
    if (!v.is_number_integer()) fail(path, pos, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < min) fail(path, pos, "must be >= " + std::to_string(min));
    return x;
  }
  bool boolean(const json& v, const std::string& path, std::size_t pos) const {
    if (!v.is_boolean()) fail(path, pos, "expected true or false");
    return v.get<bool>();
  }
  std::string string(const json& v, const std::string& path, std::size_t pos) const {
    if (!v.is_string()) fail(path, pos, "expected a string");
    return v.get<std::string>();
  }

 private:
  const std::string& text_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text, ExperimentConfig cfg) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config line " + std::to_string(line_at(text, e.byte)) +
                      ": malformed JSON (" + e.what() + ")");
  }
  const Reader r(text);
  using Handler = std::function<void(const json&, const std::string&, std::size_t)>;

  const std::map<std::string, Handler> durations{
      {"carrier_pi_us", [&](auto& v, auto& p, auto pos) { cfg.noise.durations.carrier_pi_us = r.non_negative(v, p, pos); }},
      {"sideband_pi_us", [&](auto& v, auto& p, auto pos) { cfg.noise.durations.sideband_pi_us = r.non_negative(v, p, pos); }},
      {"hide_pi_us", [&](auto& v, auto& p, auto pos) { cfg.noise.durations.hide_pi_us = r.non_negative(v, p, pos); }},
      {"detection_us", [&](auto& v, auto& p, auto pos) { cfg.noise.durations.detection_us = r.non_negative(v, p, pos); }},
  };
  const std::map<std::string, Handler> noise{
      {"detuning_sigma_SD", [&](auto& v, auto& p, auto pos) { cfg.noise.detuning_sigma_SD = r.non_negative(v, p, pos); }},
      {"static_detuning_SD", [&](auto& v, auto& p, auto pos) { cfg.noise.static_detuning_SD = r.number(v, p, pos); }},
      {"dephasing_ratio_H", [&](auto& v, auto& p, auto pos) { cfg.noise.dephasing_ratio_H = r.number(v, p, pos); }},
      {"amplitude_error_sigma", [&](auto& v, auto& p, auto pos) { cfg.noise.amplitude_error_sigma = r.non_negative(v, p, pos); }},
      {"depolarizing_per_pulse", [&](auto& v, auto& p, auto pos) { cfg.noise.depolarizing_per_pulse = r.probability(v, p, pos); }},
      {"detection_error", [&](auto& v, auto& p, auto pos) { cfg.noise.detection_error = r.probability(v, p, pos); }},
      {"correlated_dephasing", [&](auto& v, auto& p, auto pos) { cfg.noise.correlated_dephasing = r.boolean(v, p, pos); }},
      {"durations", [&](auto& v, auto& p, auto pos) { r.members(v, p, pos, durations); }},
  };

  auto parse_inputs = [&](const json& v, const std::string& path, std::size_t pos) {
    if (v.is_string()) {
      if (v.get<std::string>() != "six-canonical") {
        r.fail(path, pos, "expected \"six-canonical\" or a list of inputs");
      }
      cfg.inputs.clear();
      return;
    }
    if (!v.is_array() || v.empty()) r.fail(path, pos, "expected \"six-canonical\" or a non-empty list");
    cfg.inputs.clear();
    std::size_t from = pos;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string item = path + "[" + std::to_string(i) + "]";
      protocol::InputStateSpec spec;
      bool has_theta = false;
      const std::size_t start = text.find('{', from == std::string::npos ? 0 : from);
      r.members(v[i], item, start,
                {{"label", [&](auto& x, auto& p, auto q) { spec.label = r.string(x, p, q); }},
                 {"theta_chi", [&](auto& x, auto& p, auto q) { spec.theta_chi = r.number(x, p, q); has_theta = true; }},
                 {"phi_chi", [&](auto& x, auto& p, auto q) { spec.phi_chi = r.number(x, p, q); }}});
      if (!has_theta) r.fail(item, start, "theta_chi is required");
      if (spec.label.empty()) spec.label = "input" + std::to_string(i + 1);
      if (spec.label.find_first_of("/\\,\" ") != std::string::npos) {
        r.fail(item + ".label", start, "labels may not contain '/', '\\', ',', '\"' or spaces");
      }
      for (const auto& other : cfg.inputs) {
        if (other.label == spec.label) r.fail(item + ".label", start, "duplicate label");
      }
      cfg.inputs.push_back(spec);
      from = start == std::string::npos ? start : start + 1;
    }
  };

  const std::map<std::string, Handler> top{
      {"seed", [&](auto& v, auto& p, auto pos) { cfg.seed = static_cast<std::uint64_t>(r.integer(v, p, pos, 0)); }},
      {"shots", [&](auto& v, auto& p, auto pos) { cfg.shots = static_cast<std::uint64_t>(r.integer(v, p, pos, 1)); }},
      {"exact", [&](auto& v, auto& p, auto pos) { cfg.exact = r.boolean(v, p, pos); }},
      {"workers", [&](auto& v, auto& p, auto pos) { cfg.workers = static_cast<int>(r.integer(v, p, pos, 0)); }},
      {"fock_cutoff", [&](auto& v, auto& p, auto pos) { cfg.protocol.fock_cutoff = static_cast<int>(r.integer(v, p, pos, 2)); }},
      {"leakage_budget", [&](auto& v, auto& p, auto pos) { cfg.protocol.leakage_budget = r.probability(v, p, pos); }},
      {"phase_offset", [&](auto& v, auto& p, auto pos) {
         if (v.is_string()) {
           if (v.template get<std::string>() != "calibrate") r.fail(p, pos, "expected radians or \"calibrate\"");
           cfg.phase_offset.reset();
         } else {
           cfg.phase_offset = r.number(v, p, pos);
         }
       }},
      {"inputs", parse_inputs},
      {"output_dir", [&](auto& v, auto& p, auto pos) { cfg.output_dir = r.string(v, p, pos); }},
      {"mode", [&](auto& v, auto& p, auto pos) { cfg.mode = r.string(v, p, pos); }},
      {"standby_us", [&](auto& v, auto& p, auto pos) { cfg.protocol.standby_us = r.non_negative(v, p, pos); }},
      {"rephase_wait_us", [&](auto& v, auto& p, auto pos) { cfg.protocol.rephase_wait_us = r.non_negative(v, p, pos); }},
      {"spin_echo", [&](auto& v, auto& p, auto pos) { cfg.protocol.spin_echo = r.boolean(v, p, pos); }},
      {"dephasing_nodes", [&](auto& v, auto& p, auto pos) { cfg.protocol.dephasing_nodes = static_cast<int>(r.integer(v, p, pos, 1)); }},
      {"process_inputs", [&](auto& v, auto& p, auto pos) {
         const std::string s = r.string(v, p, pos);
         if (s == "reconstructed") {
           cfg.process_inputs = ProcessInputs::Reconstructed;
         } else if (s == "ideal") {
           cfg.process_inputs = ProcessInputs::Ideal;
         } else {
           r.fail(p, pos, "expected \"reconstructed\" or \"ideal\"");
         }
       }},
      {"bootstrap_resamples", [&](auto& v, auto& p, auto pos) { cfg.bootstrap_resamples = static_cast<int>(r.integer(v, p, pos, 0)); }},
      {"calibration_points", [&](auto& v, auto& p, auto pos) { cfg.calibration_points = static_cast<int>(r.integer(v, p, pos, 8)); }},
      {"calibration_input", [&](auto& v, auto& p, auto pos) { cfg.calibration_input = r.string(v, p, pos); }},
      {"ellipsoid_resolution", [&](auto& v, auto& p, auto pos) { cfg.ellipsoid_resolution = static_cast<int>(r.integer(v, p, pos, 8)); }},
      {"baseline_samples", [&](auto& v, auto& p, auto pos) { cfg.baseline_samples = static_cast<int>(r.integer(v, p, pos, 2)); }},
      {"noise", [&](auto& v, auto& p, auto pos) { r.members(v, p, pos, noise); }},
  };
  r.members(root, "", 0, top);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_overrides(ExperimentConfig& config, const Overrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.shots) config.shots = *o.shots;
  if (o.out) config.output_dir = *o.out;
  if (o.workers) config.workers = *o.workers;
  if (o.exact) config.exact = true;
}

void validate_config(const ExperimentConfig& config) {
  try {
    config.noise.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: noise: ") + e.what());
  }
  if (config.shots < 1) throw ConfigError("config: 'shots' must be >= 1");
  if (config.workers < 0) throw ConfigError("config: 'workers' must be >= 0");
  if (config.protocol.fock_cutoff < 2) throw ConfigError("config: 'fock_cutoff' must be >= 2");
  const auto is_ref = [&](const auto& in) { return in.label == config.calibration_input; };
  const auto& inputs = config.input_list();
  const auto& canonical = protocol::canonical_inputs();
  const bool known = std::any_of(inputs.begin(), inputs.end(), is_ref) ||
                     std::any_of(canonical.begin(), canonical.end(), is_ref);
  if (!known) {
    throw ConfigError("config: 'calibration_input' \"" + config.calibration_input +
                      "\" is neither an input label nor psi1..psi6");
  }
  if (config.bootstrap_resamples == 1) {
    throw ConfigError("config: 'bootstrap_resamples' must be 0 (off) or >= 2");
  }
}

}  // namespace iontele::cli
