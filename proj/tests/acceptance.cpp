// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "iontele/protocol.hpp"
#include "iontele/tomography.hpp"

using namespace iontele;
using namespace iontele::protocol;
using namespace iontele::tomo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "iontele-cli");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("iontele_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<DensityMatrix> canonical_rhos() {
  std::vector<DensityMatrix> out;
  for (const auto& in : canonical_inputs()) out.push_back(DensityMatrix::from_pure(input_state(in)));
  return out;
}

ProcessMatrix depolarizing(double p) {
  Matrix4c chi = Matrix4c::Zero();
  chi(0, 0) = 1.0 - 3.0 * p / 4.0;
  for (int k = 1; k < 4; ++k) chi(k, k) = p / 4.0;
  return ProcessMatrix(chi);
}

void noiseless_teleportation(Check& c) {
  const auto t0 = Clock::now();
  double worst = 1.0, worst_branch = 1.0;
  for (const auto& in : canonical_inputs()) {
    worst = std::min(worst, state_fidelity(run_exact(in, 0.0, {}), input_state(in)));
    for (const auto& b : ExactEngine(in, {}).branch_outputs(0.0)) {
      worst_branch = std::min(worst_branch, state_fidelity(b.state, input_state(in)));
    }
  }
  const double t = seconds_since(t0);
  c.detail << "min F " << worst << ", min branch F " << worst_branch << ", " << t << " s";
  c.require(worst >= 1 - 1e-9, "input fidelity");
  c.require(worst_branch >= 1 - 1e-9, "branch fidelity");
  c.require(t < 5.0, "runtime");
}

void branch_statistics(Check& c) {
  const int n = 10000;
  const auto shots = run_shots(build_sequence(canonical_inputs()[2], 0.0, FidelityCheck{}), {},
                               2004, n);
  int counts[4] = {0, 0, 0, 0};
  for (const auto& s : shots) ++counts[static_cast<int>(s.branch)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  c.detail << "counts";
  for (int k = 0; k < 4; ++k) {
    c.detail << " " << branch_name(static_cast<BranchLabel>(k)) << "=" << counts[k];
    c.require(std::abs(counts[k] - n / 4.0) <= 5 * sigma, "5 sigma");
  }
}

void fidelity_relation(Check& c) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const ProcessMatrix chi = random_cptp_qubit_channel(seed);
    const double f_proc = process_fidelity(chi, ProcessMatrix::identity());
    worst = std::max(worst, std::abs(average_fidelity(chi) - (2 * f_proc + 1) / 3));
  }
  c.detail << "max gap over 200 channels " << worst;
  c.require(worst <= 1e-9, "relation");
}

void depolarizing_oracles(Check& c) {
  const auto inputs = canonical_rhos();
  std::mt19937_64 rng(0);
  double chi_err = 0.0, fid_err = 0.0, affine_err = 0.0;
  for (double p : {0.1, 0.3, 0.7}) {
    const ProcessMatrix truth = depolarizing(p);
    std::vector<CountsTable> outputs;
    for (const auto& rho : inputs) {
      outputs.push_back(simulate_state_tomography(
          DensityMatrix::from_numerical(truth.apply(rho.matrix())), 0, rng));
    }
    const ProcessMleResult fit = mle_process(inputs, outputs);
    chi_err = std::max(chi_err, (fit.chi.chi() - truth.chi()).cwiseAbs().maxCoeff());

    const double f_proc = process_fidelity(fit.chi, ProcessMatrix::identity());
    fid_err = std::max({fid_err, std::abs(f_proc - (1 - 3 * p / 4)),
                        std::abs(average_fidelity(fit.chi) - (1 - p / 2))});

    const AffineMap map = affine_decompose(truth);
    affine_err = std::max({affine_err, (map.S - (1 - p) * Matrix3::Identity()).cwiseAbs().maxCoeff(),
                           map.b.cwiseAbs().maxCoeff(),
                           (map.O - Matrix3::Identity()).cwiseAbs().maxCoeff()});
  }
  c.detail << "chi err " << chi_err << ", fidelity err " << fid_err << ", affine err "
           << affine_err;
  c.require(chi_err <= 1e-4, "chi");
  c.require(fid_err <= 1e-6, "fidelities");
  c.require(affine_err <= 1e-8, "affine");
}

void state_mle_recovery(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int good = 0;
  bool physical = true;
  for (int trial = 0; trial < 100; ++trial) {
    Vector3 r;
    do {
      r = Vector3(u(rng), u(rng), u(rng));
    } while (r.norm() > 1.0);
    const DensityMatrix truth = from_bloch_vector(r);
    const StateMleResult fit = mle_state(simulate_state_tomography(truth, 100000, rng));
    const ComplexMatrix& rho = fit.rho.matrix();
    physical = physical && std::abs(rho.trace().real() - 1.0) <= 1e-10 &&
               min_eigenvalue(rho) >= -1e-12 && hermiticity_error(rho) <= 1e-12;
    if (trace_distance(fit.rho, truth) <= 0.02) ++good;
  }
  c.detail << good << "/100 within trace distance 0.02";
  c.require(good >= 95, "recovery rate");
  c.require(physical, "PSD/trace invariants");
}

void classical_limit(Check& c) {
  const double analytic = classical_baseline();
  auto rng = noise::make_stream(2004, 0, 15);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double f = measure_and_resend_fidelity(random_pure_state(2, rng));
    sum += f;
    sum2 += f * f;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
  c.detail << "analytic " << analytic << ", Haar MC " << mean << " +/- " << se;
  c.require(std::abs(analytic - 2.0 / 3.0) <= 1e-12, "analytic");
  c.require(std::abs(mean - analytic) <= 4 * se, "Monte-Carlo");
}

void preset_bracket(Check& c) {
  const fs::path dir = scratch("preset");
  const std::string preset = std::string(IONTELE_SOURCE_DIR) + "/configs/paper.json";
  const auto t0 = Clock::now();
  const int rc_tele = invoke({"--config", preset, "--out", dir.string(), "teleport"});
  const int rc_proc = invoke({"--config", preset, "--out", dir.string(), "proc-tomo"});
  const double t = seconds_since(t0);
  c.require(rc_tele == 0 && rc_proc == 0, "exit codes");
  if (!c.ok) return;

  const auto summary = nlohmann::json::parse(slurp(dir / "teleport_summary.json"));
  const double f_mean = summary["mean_fidelity_sampled"].get<double>();
  std::ifstream csv(dir / "fidelities.csv");
  std::string line;
  std::getline(csv, line);
  double lo = 1.0, hi = 0.0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string field;
    for (int k = 0; k < 5; ++k) std::getline(ss, field, ',');  // f_sampled
    lo = std::min(lo, std::stod(field));
    hi = std::max(hi, std::stod(field));
  }
  const auto report = nlohmann::json::parse(slurp(dir / "process_report.json"));
  const double chi_ii = report["chi_II"].get<double>();
  const auto s = report["S_eigenvalues"].get<std::vector<double>>();
  const double angle = report["rotation_angle_deg"].get<double>();
  const double s_min = *std::min_element(s.begin(), s.end());
  const double s_max = *std::max_element(s.begin(), s.end());

  c.detail << "F " << f_mean << ", span " << hi - lo << " (" << lo << "-" << hi << "), chi_II "
           << chi_ii << ", S " << s[0] << "/" << s[1] << "/" << s[2] << ", rotation " << angle
           << " deg, " << t << " s";
  c.require(f_mean >= 0.75 && f_mean <= 0.90, "mean fidelity");
  c.require(hi - lo >= 0.05, "per-state span");
  c.require(chi_ii >= 0.6 && chi_ii <= 0.85, "chi_II");
  c.require(s_max < 1.0 && s_max - s_min >= 0.02, "S anisotropy");
  c.require(std::abs(angle) <= 10.0, "rotation");
  c.require(t < 120.0, "runtime");
}

void spin_echo(Check& c) {
  noise::NoiseConfig n;
  n.detuning_sigma_SD = 0.0007;
  ProtocolOptions on, off;
  off.spin_echo = false;
  double f_on = 0.0, f_off = 0.0;
  for (const auto& in : canonical_inputs()) {
    f_on += state_fidelity(run_exact(in, 0.0, n, on), input_state(in)) / 6;
    f_off += state_fidelity(run_exact(in, 0.0, n, off), input_state(in)) / 6;
  }
  c.detail << "sigma " << n.detuning_sigma_SD << " rad/us: echo off " << f_off << ", echo on "
           << f_on;
  c.require(f_off <= 0.9, "unechoed fidelity <= 0.9");
  c.require(f_on > f_off, "echo improves");
}

void determinism(Check& c) {
  const fs::path dir = scratch("determinism");
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"seed": 77, "shots": 400, "workers": 2, "bootstrap_resamples": 4,
               "calibration_points": 16, "baseline_samples": 5000,
               "noise": {"detuning_sigma_SD": 0.001, "detection_error": 0.01}})";
  }
  const std::vector<std::string> subcommands{"teleport", "state-tomo", "proc-tomo",
                                             "calibrate", "baseline", "export-sequence"};
  int files = 0;
  for (const auto& sub : subcommands) {
    for (const char* run : {"a", "b"}) {
      const int rc = invoke({"--config", (dir / "config.json").string(), "--out",
                             (dir / run / sub).string(), sub});
      c.require(rc == 0, sub + " exit code");
    }
    for (const auto& entry : fs::directory_iterator(dir / "a" / sub)) {
      const fs::path other = dir / "b" / sub / entry.path().filename();
      c.require(slurp(entry.path()) == slurp(other), sub + "/" + entry.path().filename().string());
      ++files;
    }
  }
  c.detail << files << " files compared across two runs of " << subcommands.size()
           << " subcommands";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"noiseless teleportation", noiseless_teleportation},
      {"branch statistics", branch_statistics},
      {"fidelity relation", fidelity_relation},
      {"depolarizing oracles", depolarizing_oracles},
      {"state MLE recovery", state_mle_recovery},
      {"classical baseline", classical_limit},
      {"calibrated preset bracket", preset_bracket},
      {"spin echo", spin_echo},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Check c;
    try {
      criteria[k].second(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << " [exception: " << e.what() << "]";
    }
    if (!c.ok) ++failures;
    std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first
              << "): " << c.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
