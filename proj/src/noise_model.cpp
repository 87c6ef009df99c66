#include "iontele/noise_model.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "iontele/errors.hpp"

namespace iontele::noise {

namespace {

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  }
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite and non-negative");
  }
}

}  // namespace

void NoiseConfig::validate() const {
  require_non_negative(detuning_sigma_SD, "detuning_sigma_SD");
  require_non_negative(dephasing_ratio_H, "dephasing_ratio_H");
  require_non_negative(amplitude_error_sigma, "amplitude_error_sigma");
  require_probability(depolarizing_per_pulse, "depolarizing_per_pulse");
  require_probability(detection_error, "detection_error");
  if (!std::isfinite(static_detuning_SD)) {
    throw std::invalid_argument("static_detuning_SD must be finite");
  }
  require_non_negative(durations.carrier_pi_us, "carrier_pi_us");
  require_non_negative(durations.sideband_pi_us, "sideband_pi_us");
  require_non_negative(durations.hide_pi_us, "hide_pi_us");
  require_non_negative(durations.detection_us, "detection_us");
}

bool NoiseConfig::is_noiseless() const {
  return detuning_sigma_SD == 0.0 && static_detuning_SD == 0.0 && amplitude_error_sigma == 0.0 &&
         depolarizing_per_pulse == 0.0 && detection_error == 0.0;
}

double ShotNoise::amplitude_factor(int pulse_index) const {
  if (pulse_index < 0 || pulse_index >= static_cast<int>(amplitude_factors.size())) {
    throw std::out_of_range("ShotNoise: pulse index " + std::to_string(pulse_index) +
                            " exceeds the sampled pulse slots");
  }
  return amplitude_factors[pulse_index];
}

std::mt19937_64 make_stream(std::uint64_t master_seed, std::uint64_t shot_index,
                            std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(shot_index),
                    static_cast<std::uint32_t>(shot_index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

ShotNoise fixed_detuning(const NoiseConfig& config, std::vector<double> detuning_SD,
                         int pulse_slots) {
  ShotNoise out;
  out.detuning_H.reserve(detuning_SD.size());
  for (double d : detuning_SD) out.detuning_H.push_back((1.0 + config.dephasing_ratio_H) * d);
  out.detuning_SD = std::move(detuning_SD);
  out.amplitude_factors.assign(pulse_slots, 1.0);
  return out;
}

ShotNoise sample_shot_noise(const NoiseConfig& config, std::uint64_t master_seed,
                            std::uint64_t shot_index, int n_ions, int pulse_slots) {
  std::mt19937_64 rng = make_stream(master_seed, shot_index, kNoiseStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> detuning(n_ions, config.static_detuning_SD);
  if (config.detuning_sigma_SD > 0.0) {
    if (config.correlated_dephasing) {
      const double shared = config.detuning_sigma_SD * normal(rng);
      for (double& d : detuning) d += shared;
    } else {
      for (double& d : detuning) d += config.detuning_sigma_SD * normal(rng);
    }
  }
  ShotNoise out = fixed_detuning(config, std::move(detuning), pulse_slots);
  if (config.amplitude_error_sigma > 0.0) {
    for (double& f : out.amplitude_factors) f = 1.0 + config.amplitude_error_sigma * normal(rng);
  }
  return out;
}

trap::TrapRegister accrue_phase(trap::TrapRegister reg, double duration_us,
                                const ShotNoise& shot_noise) {
  if (!(duration_us >= 0.0)) throw std::invalid_argument("accrue_phase: negative duration");
  const auto& dims = reg.dims();
  if (static_cast<int>(shot_noise.detuning_SD.size()) != dims.n_ions ||
      static_cast<int>(shot_noise.detuning_H.size()) != dims.n_ions) {
    throw DimensionError("accrue_phase: detuning list does not match the ion count");
  }
  bool trivial = duration_us == 0.0;
  if (!trivial) {
    trivial = true;
    for (int i = 0; i < dims.n_ions; ++i) {
      if (shot_noise.detuning_SD[i] != 0.0 || shot_noise.detuning_H[i] != 0.0) trivial = false;
    }
  }
  if (trivial) return reg;

  // Phase per ion level, then per internal configuration; motion is a spectator.
  std::vector<std::array<Complex, trap::kLevelsPerIon>> factor(dims.n_ions);
  for (int ion = 0; ion < dims.n_ions; ++ion) {
    factor[ion] = {Complex(1.0), std::exp(-kI * (duration_us * shot_noise.detuning_SD[ion])),
                   std::exp(-kI * (duration_us * shot_noise.detuning_H[ion]))};
  }
  const int configs = dims.dim() / dims.fock_cutoff;
  ComplexVector phases(dims.dim());
  for (int c = 0; c < configs; ++c) {
    int rest = c;
    Complex z(1.0);
    for (int ion = dims.n_ions - 1; ion >= 0; --ion) {
      z *= factor[ion][rest % trap::kLevelsPerIon];
      rest /= trap::kLevelsPerIon;
    }
    phases.segment(c * dims.fock_cutoff, dims.fock_cutoff).setConstant(z);
  }
  reg.apply_diagonal(phases);
  return reg;
}

trap::LocalOperator pauli_local(const trap::RegisterDims& dims, int ion, Pauli p) {
  if (ion < 0 || ion >= dims.n_ions) throw std::invalid_argument("pauli_local: bad ion index");
  ComplexMatrix op = ComplexMatrix::Identity(trap::kLevelsPerIon, trap::kLevelsPerIon);
  op.topLeftCorner(2, 2) = pauli(p);
  return {std::move(op), {ion}};
}

trap::TrapRegister apply_depolarizing(trap::TrapRegister reg, int ion, double p) {
  require_probability(p, "depolarizing probability");
  if (p == 0.0) return reg;
  if (reg.is_pure()) reg = reg.to_density();
  // Closed form of (1 - p) B + (p/4) sum_sigma sigma B sigma^dag on each ion
  // block B, with sigma in {I, X, Y, Z} acting on {S, D} and fixing H.
  // The Pauli sum equals I + X + Y + Z = m on a column into H.
  Eigen::Matrix2cd m;
  m << 2.0, Complex(1.0, -1.0), Complex(1.0, 1.0), 0.0;
  const Eigen::Matrix2cd m_adj = m.adjoint();
  reg.transform_ion_blocks(ion, [&](const Eigen::Matrix3cd& b) {
    Eigen::Matrix3cd out = (1.0 - p) * b;
    const Complex tr = b(0, 0) + b(1, 1);
    out(0, 0) += 0.5 * p * tr;
    out(1, 1) += 0.5 * p * tr;
    out.block<2, 1>(0, 2) += 0.25 * p * m * b.block<2, 1>(0, 2);
    out.block<1, 2>(2, 0) += 0.25 * p * b.block<1, 2>(2, 0) * m_adj;
    out(2, 2) = b(2, 2);
    return out;
  });
  return reg;
}

DensityMatrix apply_depolarizing(const DensityMatrix& rho, double p) {
  require_probability(p, "depolarizing probability");
  if (rho.dim() != 2) throw DimensionError("apply_depolarizing: qubit density matrix required");
  const ComplexMatrix& m = rho.matrix();
  ComplexMatrix out = (1.0 - 0.75 * p) * m;
  for (int k = 1; k < 4; ++k) {
    const ComplexMatrix s = pauli_basis()[k];
    out += 0.25 * p * s * m * s;
  }
  return DensityMatrix::from_numerical(std::move(out));
}

Pauli sample_depolarizing_pauli(double p, std::mt19937_64& rng) {
  if (p == 0.0) return Pauli::I;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  if (u < 0.25 * p) return Pauli::X;
  if (u < 0.5 * p) return Pauli::Y;
  if (u < 0.75 * p) return Pauli::Z;
  return Pauli::I;
}

trap::Pulse perturb_pulse(const trap::Pulse& pulse, const ShotNoise& shot_noise,
                          int pulse_index) {
  return std::visit(
      [&](auto p) -> trap::Pulse {
        using T = decltype(p);
        if constexpr (std::is_same_v<T, trap::Wait> || std::is_same_v<T, trap::Detect>) {
          throw std::invalid_argument("perturb_pulse: only Carrier/BlueSideband/Hide pulses");
        } else {
          p.theta *= shot_noise.amplitude_factor(pulse_index);
          return p;
        }
      },
      pulse);
}

double pulse_duration(const trap::Pulse& pulse, const PulseDurations& durations) {
  using std::numbers::pi;
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, trap::Wait>) {
          return p.duration_us;
        } else if constexpr (std::is_same_v<T, trap::Detect>) {
          return durations.detection_us;
        } else if constexpr (std::is_same_v<T, trap::Carrier>) {
          return p.theta / pi * durations.carrier_pi_us;
        } else if constexpr (std::is_same_v<T, trap::BlueSideband>) {
          return p.theta / pi * durations.sideband_pi_us;
        } else {
          return p.theta / pi * durations.hide_pi_us;
        }
      },
      pulse);
}

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = solver.eigenvalues()[k];
    const double v0 = solver.eigenvectors()(0, k);
    rule.weights[k] = v0 * v0;
    total += rule.weights[k];
  }
  for (double& w : rule.weights) w /= total;
  // Symmetrise: exact odd moments and mirror-identical nodes.
  for (int k = 0; k < n / 2; ++k) {
    const double x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[k] + rule.weights[n - 1 - k]);
    rule.nodes[k] = -x;
    rule.nodes[n - 1 - k] = x;
    rule.weights[k] = rule.weights[n - 1 - k] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace iontele::noise
