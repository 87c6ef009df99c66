#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "cli.hpp"
#include "iontele/errors.hpp"
#include "iontele/tomography.hpp"

namespace iontele::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Seed-stream tags; each output quantity gets its own derived seeds.
constexpr std::uint64_t kTeleportTag = 11;
constexpr std::uint64_t kOutputCountsTag = 12;
constexpr std::uint64_t kInputCountsTag = 13;
constexpr std::uint64_t kBootstrapTag = 14;
constexpr std::uint64_t kBaselineTag = 15;

std::uint64_t derived_seed(const ExperimentConfig& c, std::size_t index, std::uint64_t tag) {
  return noise::make_stream(c.seed, index, tag)();
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// Output files, checked before they are written.

using Field = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Field>> rows;
};

std::string render(const Table& t, const std::string& name) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) {
      throw InvariantViolation(name + ": row " + std::to_string(r + 1) + " has " +
                               std::to_string(row.size()) + " fields, header has " +
                               std::to_string(t.header.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      if (const auto* d = std::get_if<double>(&row[i])) {
        if (!std::isfinite(*d)) {
          throw InvariantViolation(name + ": non-finite value in column " + t.header[i]);
        }
        os << fmt(*d);
      } else if (const auto* n = std::get_if<std::int64_t>(&row[i])) {
        os << *n;
      } else {
        const auto& s = std::get<std::string>(row[i]);
        if (s.find_first_of(",\n\"") != std::string::npos) {
          throw InvariantViolation(name + ": text field needs quoting: " + s);
        }
        os << s;
      }
    }
    os << '\n';
  }
  return os.str();
}

enum class Kind { Number, NumberOrNull, String, Bool, Array, Object };

struct FieldSpec {
  std::string key;
  Kind kind;
};

void check_numbers(const ordered_json& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) {
    throw InvariantViolation(where + ": non-finite number");
  }
  if (j.is_structured()) {
    for (const auto& v : j) check_numbers(v, where);
  }
}

void check_schema(const ordered_json& j, const std::vector<FieldSpec>& schema,
                  const std::string& name) {
  for (const auto& f : schema) {
    if (!j.contains(f.key)) throw InvariantViolation(name + ": missing key " + f.key);
    const auto& v = j.at(f.key);
    bool ok = false;
    switch (f.kind) {
      case Kind::Number: ok = v.is_number(); break;
      case Kind::NumberOrNull: ok = v.is_number() || v.is_null(); break;
      case Kind::String: ok = v.is_string(); break;
      case Kind::Bool: ok = v.is_boolean(); break;
      case Kind::Array: ok = v.is_array(); break;
      case Kind::Object: ok = v.is_object(); break;
    }
    if (!ok) throw InvariantViolation(name + ": key " + f.key + " has the wrong type");
  }
  if (j.size() != schema.size()) throw InvariantViolation(name + ": unexpected keys");
  check_numbers(j, name);
}

class OutputDir {
 public:
  explicit OutputDir(const fs::path& dir) : dir_(dir) { fs::create_directories(dir_); }

  void text(const std::string& name, const std::string& content) const {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
  }
  void csv(const std::string& name, const Table& t) const { text(name, render(t, name)); }
  void json(const std::string& name, const ordered_json& j,
            const std::vector<FieldSpec>& schema) const {
    check_schema(j, schema, name);
    text(name, j.dump(2) + "\n");
  }
  /// Matrix JSON plus a read-back check: the file must reproduce m exactly.
  void matrix(const std::string& name, const ComplexMatrix& m) const {
    const std::string s = tomo::matrix_to_json(m);
    const ComplexMatrix back = tomo::matrix_from_json(s);
    if (back != m) throw InvariantViolation(name + ": matrix JSON does not round-trip");
    text(name, s);
  }

 private:
  fs::path dir_;
};

ordered_json vec_json(const Vector3& v) { return ordered_json::array({v(0), v(1), v(2)}); }

const protocol::InputStateSpec& find_input(const ExperimentConfig& c, const std::string& label) {
  for (const auto& in : c.input_list()) {
    if (in.label == label) return in;
  }
  for (const auto& in : protocol::canonical_inputs()) {
    if (in.label == label) return in;
  }
  throw ConfigError("unknown input label " + label);
}

double resolve_phase(const ExperimentConfig& c, std::ostream& out) {
  if (c.phase_offset) return *c.phase_offset;
  const auto cal = protocol::calibrate_phase(c.noise, find_input(c, c.calibration_input),
                                             c.calibration_points, c.protocol);
  out << "calibrated phase offset " << fmt(cal.phase_offset) << " rad (fidelity "
      << fmt(cal.fidelity) << ")\n";
  return cal.phase_offset;
}

std::uint64_t shots_or_exact(const ExperimentConfig& c) { return c.exact ? 0 : c.shots; }

const char* level_name(int k) { return k == 0 ? "S" : "D"; }
const char* pauli_name(int k) {
  static const char* names[] = {"I", "X", "Y", "Z"};
  return names[k];
}

Table matrix_bars(const ComplexMatrix& m, const char* (*label)(int)) {
  Table t{{"row", "col", "real", "imag", "abs"}, {}};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t.rows.push_back({std::string(label(static_cast<int>(r))),
                        std::string(label(static_cast<int>(c))), m(r, c).real(), m(r, c).imag(),
                        std::abs(m(r, c))});
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

ExitCode cmd_teleport(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const double phase = resolve_phase(c, out);
  const auto& inputs = c.input_list();

  Table fid{{"input_label", "theta_chi", "phi_chi", "f_exact", "f_sampled", "stderr"}, {}};
  Table bars{{"input_label", "fidelity", "error", "classical_limit"}, {}};
  const double baseline = protocol::classical_baseline();
  double sum_exact = 0.0, sum_sampled = 0.0, var = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    const double f_exact =
        protocol::teleportation_fidelity(in, c.noise, protocol::Exact{}, phase, c.protocol).value;
    protocol::FidelityEstimate sampled;
    if (c.exact) {
      // Infinite-statistics limit of the Bright frequency.
      const protocol::ExactEngine engine(
          protocol::build_sequence(in, phase, protocol::FidelityCheck{}, c.protocol), c.noise,
          c.protocol, phase);
      sampled = {engine.final_bright_probability(phase), 0.0};
    } else {
      sampled = protocol::teleportation_fidelity(
          in, c.noise,
          protocol::Sampled{c.shots, derived_seed(c, i, kTeleportTag), c.worker_count()}, phase,
          c.protocol);
    }
    fid.rows.push_back({in.label, in.theta_chi, in.phi_chi, f_exact, sampled.value, sampled.stderr_});
    bars.rows.push_back({in.label, sampled.value, sampled.stderr_, baseline});
    sum_exact += f_exact;
    sum_sampled += sampled.value;
    var += sampled.stderr_ * sampled.stderr_;
  }
  const double n = static_cast<double>(inputs.size());
  const double mean = sum_sampled / n;
  const double err = std::sqrt(var) / n;

  ordered_json summary;
  summary["phase_offset"] = phase;
  summary["exact"] = c.exact;
  summary["shots"] = c.exact ? 0 : c.shots;
  summary["mean_fidelity_exact"] = sum_exact / n;
  summary["mean_fidelity_sampled"] = mean;
  summary["mean_fidelity_stderr"] = err;
  summary["classical_baseline"] = baseline;
  dir.csv("fidelities.csv", fid);
  dir.csv("fidelity_bars.csv", bars);
  dir.json("teleport_summary.json", summary,
           {{"phase_offset", Kind::Number},
            {"exact", Kind::Bool},
            {"shots", Kind::Number},
            {"mean_fidelity_exact", Kind::Number},
            {"mean_fidelity_sampled", Kind::Number},
            {"mean_fidelity_stderr", Kind::Number},
            {"classical_baseline", Kind::Number}});

  out << "input      f_exact    f_sampled  stderr\n";
  for (const auto& row : fid.rows) {
    out << std::left << std::setw(10) << std::get<std::string>(row[0]) << std::right << std::fixed
        << std::setprecision(4) << ' ' << std::get<double>(row[3]) << "     "
        << std::get<double>(row[4]) << "     " << std::get<double>(row[5]) << '\n';
  }
  out << std::defaultfloat;
  out << "mean fidelity " << fmt(mean) << " +/- " << fmt(err) << " (exact " << fmt(sum_exact / n)
      << ")\n";
  out << "classical limit " << fmt(baseline) << ": "
      << (mean > baseline ? "exceeded" : "not exceeded");
  if (err > 0.0) out << " by " << fmt((mean - baseline) / err) << " standard errors";
  out << '\n';
  return ExitCode::Ok;
}

ExitCode cmd_state_tomo(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const double phase = resolve_phase(c, out);
  const auto& inputs = c.input_list();
  Table summary{{"input_label", "fidelity", "trace_distance", "purity", "iterations", "converged"},
                {}};
  bool all_converged = true;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    const auto counts =
        tomo::teleported_counts(in, c.noise, phase, shots_or_exact(c),
                                derived_seed(c, i, kOutputCountsTag), c.worker_count(), c.protocol);
    const auto fit = tomo::mle_state(counts);
    all_converged = all_converged && fit.converged;
    const PureState ideal = protocol::input_state(in);
    const double f = state_fidelity(fit.rho, ideal);
    const double td = trace_distance(fit.rho, DensityMatrix::from_pure(ideal));
    summary.rows.push_back({in.label, f, td, fit.rho.purity(),
                            static_cast<std::int64_t>(fit.iterations),
                            std::string(fit.converged ? "true" : "false")});
    dir.text("counts_" + in.label + ".csv", tomo::counts_to_csv(counts));
    dir.matrix("rho_" + in.label + ".json", fit.rho.matrix());
    dir.csv("rho_" + in.label + "_bars.csv", matrix_bars(fit.rho.matrix(), level_name));
    out << in.label << ": fidelity " << fmt(f) << ", trace distance " << fmt(td) << '\n';
  }
  dir.csv("state_tomography.csv", summary);
  if (!all_converged) {
    out << "warning: state reconstruction did not converge for every input\n";
    return ExitCode::NonConvergence;
  }
  return ExitCode::Ok;
}

ExitCode cmd_proc_tomo(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const double phase = resolve_phase(c, out);
  const auto& specs = c.input_list();
  const std::uint64_t shots = shots_or_exact(c);

  std::vector<DensityMatrix> inputs;
  std::vector<tomo::CountsTable> outputs;
  double state_fid_sum = 0.0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& in = specs[i];
    const DensityMatrix ideal = DensityMatrix::from_pure(protocol::input_state(in));
    if (c.process_inputs == ProcessInputs::Ideal) {
      inputs.push_back(ideal);
    } else {
      auto rng = noise::make_stream(c.seed, i, kInputCountsTag);
      const auto counts =
          tomo::simulate_state_tomography(ideal, shots, rng, c.noise.detection_error);
      inputs.push_back(tomo::mle_state(counts).rho);
    }
    outputs.push_back(tomo::teleported_counts(in, c.noise, phase, shots,
                                              derived_seed(c, i, kOutputCountsTag),
                                              c.worker_count(), c.protocol));
    state_fid_sum +=
        state_fidelity(tomo::mle_state(outputs.back()).rho, protocol::input_state(in));
  }
  const auto fit = tomo::mle_process(inputs, outputs);
  const auto map = tomo::affine_decompose(fit.chi);
  const ProcessMatrix ideal = ProcessMatrix::identity();
  const double f_proc = tomo::process_fidelity(fit.chi, ideal);
  const double f_avg_chi = tomo::average_fidelity(fit.chi);
  const double f_avg_from_proc = tomo::avg_from_process_fidelity(std::clamp(f_proc, 0.0, 1.0));
  const double f_avg_states = state_fid_sum / static_cast<double>(specs.size());
  const double gap = std::abs(f_avg_states - f_avg_from_proc);
  const bool consistent = gap <= 0.02;

  dir.matrix("chi.json", fit.chi.chi());
  dir.csv("chi_bars.csv", matrix_bars(fit.chi.chi(), pauli_name));
  dir.text("affine.json", tomo::affine_to_json(map));
  Table mesh{{"x", "y", "z"}, {}};
  for (const auto& p : tomo::ellipsoid_mesh(map, c.ellipsoid_resolution)) {
    if (p.norm() > 1.0 + 1e-10) throw InvariantViolation("ellipsoid point outside the Bloch ball");
    mesh.rows.push_back({p(0), p(1), p(2)});
  }
  dir.csv("ellipsoid.csv", mesh);

  const double deg = 180.0 / std::numbers::pi;
  ordered_json report;
  report["phase_offset"] = phase;
  report["exact"] = c.exact;
  report["shots"] = c.exact ? 0 : c.shots;
  report["process_inputs"] = c.process_inputs == ProcessInputs::Ideal ? "ideal" : "reconstructed";
  report["converged"] = fit.converged;
  report["iterations"] = fit.iterations;
  report["gradient_norm"] = fit.gradient_norm;
  report["chi_II"] = fit.chi.chi()(0, 0).real();
  report["process_fidelity"] = f_proc;
  report["average_fidelity_chi"] = f_avg_chi;
  report["average_fidelity_from_process"] = f_avg_from_proc;
  report["average_fidelity_states"] = f_avg_states;
  report["fidelity_relation_gap"] = gap;
  report["fidelity_relation_ok"] = consistent;
  report["S_eigenvalues"] = vec_json(map.s_eigenvalues);
  report["rotation_angle_deg"] =
      std::isnan(map.rotation_angle) ? ordered_json(nullptr) : ordered_json(map.rotation_angle * deg);
  report["det_O"] = map.det_O;
  report["b"] = vec_json(map.b);

  ordered_json errors = nullptr;
  if (!c.exact && c.bootstrap_resamples >= 2) {
    const auto bs = tomo::bootstrap_process(inputs, outputs, fit.chi, c.bootstrap_resamples,
                                            derived_seed(c, 0, kBootstrapTag));
    errors = ordered_json::object();
    errors["resamples"] = bs.resamples;
    errors["chi_II"] = bs.chi_II;
    errors["process_fidelity"] = bs.process_fidelity;
    errors["average_fidelity"] = bs.average_fidelity;
    errors["S_eigenvalues"] = vec_json(bs.s_eigenvalues);
    errors["rotation_angle_deg"] = bs.rotation_angle * deg;
    errors["b"] = vec_json(bs.b);
  }
  report["bootstrap_stddev"] = errors;
  const std::vector<FieldSpec> schema{{"phase_offset", Kind::Number},
                                      {"exact", Kind::Bool},
                                      {"shots", Kind::Number},
                                      {"process_inputs", Kind::String},
                                      {"converged", Kind::Bool},
                                      {"iterations", Kind::Number},
                                      {"gradient_norm", Kind::Number},
                                      {"chi_II", Kind::Number},
                                      {"process_fidelity", Kind::Number},
                                      {"average_fidelity_chi", Kind::Number},
                                      {"average_fidelity_from_process", Kind::Number},
                                      {"average_fidelity_states", Kind::Number},
                                      {"fidelity_relation_gap", Kind::Number},
                                      {"fidelity_relation_ok", Kind::Bool},
                                      {"S_eigenvalues", Kind::Array},
                                      {"rotation_angle_deg", Kind::NumberOrNull},
                                      {"det_O", Kind::Number},
                                      {"b", Kind::Array},
                                      {"bootstrap_stddev", Kind::Object}};
  if (errors.is_null()) {
    auto relaxed = schema;
    relaxed.back().kind = Kind::NumberOrNull;
    dir.json("process_report.json", report, relaxed);
  } else {
    dir.json("process_report.json", report, schema);
  }

  auto pm = [&](const char* key) {
    if (errors.is_null()) return std::string();
    return " +/- " + fmt(errors[key].get<double>());
  };
  out << "chi_II " << fmt(fit.chi.chi()(0, 0).real()) << pm("chi_II") << '\n';
  out << "process fidelity " << fmt(f_proc) << pm("process_fidelity") << '\n';
  out << "average fidelity: chi " << fmt(f_avg_chi) << ", (2 F_proc + 1)/3 "
      << fmt(f_avg_from_proc) << ", states " << fmt(f_avg_states) << '\n';
  out << "S eigenvalues " << fmt(map.s_eigenvalues(0)) << ' ' << fmt(map.s_eigenvalues(1)) << ' '
      << fmt(map.s_eigenvalues(2)) << '\n';
  if (std::isnan(map.rotation_angle)) {
    out << "det O = -1 (improper rotation)\n";
  } else {
    out << "rotation angle " << fmt(map.rotation_angle * deg) << " deg"
        << (errors.is_null() ? "" : " +/- " + fmt(errors["rotation_angle_deg"].get<double>()))
        << '\n';
  }
  out << "b " << fmt(map.b(0)) << ' ' << fmt(map.b(1)) << ' ' << fmt(map.b(2));
  if (!errors.is_null()) {
    out << " +/- " << fmt(errors["b"][0].get<double>()) << ' '
        << fmt(errors["b"][1].get<double>()) << ' ' << fmt(errors["b"][2].get<double>());
  }
  out << '\n';
  out << "fidelity relation |F_states - (2 F_proc + 1)/3| = " << fmt(gap)
      << (consistent ? " <= 0.02" : " > 0.02") << '\n';

  if (!fit.converged) {
    out << "warning: process reconstruction stopped after " << fit.iterations
        << " iterations, gradient norm " << fmt(fit.gradient_norm) << '\n';
    return ExitCode::NonConvergence;
  }
  if (!consistent) return ExitCode::Invariant;
  return ExitCode::Ok;
}

ExitCode cmd_calibrate(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const auto& ref = find_input(c, c.calibration_input);
  const auto cal = protocol::calibrate_phase(c.noise, ref, c.calibration_points, c.protocol);
  Table sweep{{"phi", "fidelity"}, {}};
  for (const auto& [phi, f] : cal.sweep) sweep.rows.push_back({phi, f});
  dir.csv("phase_sweep.csv", sweep);
  ordered_json j;
  j["reference_input"] = ref.label;
  j["grid_points"] = c.calibration_points;
  j["phase_offset"] = cal.phase_offset;
  j["fidelity"] = cal.fidelity;
  dir.json("calibration.json", j,
           {{"reference_input", Kind::String},
            {"grid_points", Kind::Number},
            {"phase_offset", Kind::Number},
            {"fidelity", Kind::Number}});
  out << "phase offset " << fmt(cal.phase_offset) << " rad, fidelity " << fmt(cal.fidelity)
      << " (" << ref.label << ")\n";
  return ExitCode::Ok;
}

ExitCode cmd_baseline(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const double analytic = protocol::classical_baseline();
  auto rng = noise::make_stream(c.seed, 0, kBaselineTag);
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < c.baseline_samples; ++k) {
    const double f = protocol::measure_and_resend_fidelity(random_pure_state(2, rng));
    sum += f;
    sum2 += f * f;
  }
  const double n = c.baseline_samples;
  const double mean = sum / n;
  const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / (n - 1));
  const double z = se > 0.0 ? std::abs(mean - analytic) / se : 0.0;
  ordered_json j;
  j["analytic"] = analytic;
  j["monte_carlo_mean"] = mean;
  j["monte_carlo_stderr"] = se;
  j["samples"] = c.baseline_samples;
  j["deviation_sigma"] = z;
  dir.json("baseline.json", j,
           {{"analytic", Kind::Number},
            {"monte_carlo_mean", Kind::Number},
            {"monte_carlo_stderr", Kind::Number},
            {"samples", Kind::Number},
            {"deviation_sigma", Kind::Number}});
  out << "classical baseline " << fmt(analytic) << "; Haar Monte-Carlo " << fmt(mean) << " +/- "
      << fmt(se) << " (" << fmt(z) << " sigma)\n";
  return ExitCode::Ok;
}

ExitCode cmd_export_sequence(const ExperimentConfig& c, std::ostream& out) {
  const OutputDir dir(c.output_dir);
  const double phase = resolve_phase(c, out);
  const auto& in = c.input_list().front();
  const auto seq = protocol::build_sequence(in, phase, protocol::FidelityCheck{}, c.protocol);
  protocol::validate_sequence(seq, c.protocol);
  const std::string listing = protocol::format_sequence(seq);
  dir.text("sequence.txt", listing);
  out << listing;
  return ExitCode::Ok;
}

}  // namespace iontele::cli
