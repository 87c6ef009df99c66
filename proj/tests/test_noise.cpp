#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "iontele/noise_model.hpp"

using namespace iontele;
using namespace iontele::noise;
using std::numbers::pi;

namespace {

trap::TrapRegister plus_state() {
  return trap::apply_pulse(trap::initialize(1, 2), trap::Carrier{0, pi / 2, pi / 2});
}

Complex sd_coherence(const trap::TrapRegister& reg) {
  const ComplexMatrix rho = reg.density_matrix();
  const int f = reg.dims().fock_cutoff;
  return rho(0, f);  // <S,0| rho |D,0>
}

}  // namespace

TEST(Config, Validation) {
  NoiseConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(c.is_noiseless());
  c.detection_error = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.detuning_sigma_SD = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.durations.detection_us = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ShotNoiseTest, ZeroConfigAndDeterminism) {
  const ShotNoise zero = sample_shot_noise({}, 1, 0);
  for (double d : zero.detuning_SD) EXPECT_EQ(d, 0.0);
  for (double d : zero.detuning_H) EXPECT_EQ(d, 0.0);
  for (double a : zero.amplitude_factors) EXPECT_EQ(a, 1.0);

  NoiseConfig c;
  c.detuning_sigma_SD = 0.01;
  c.amplitude_error_sigma = 0.02;
  const ShotNoise a = sample_shot_noise(c, 5, 17), b = sample_shot_noise(c, 5, 17);
  EXPECT_EQ(a.detuning_SD, b.detuning_SD);
  EXPECT_EQ(a.amplitude_factors, b.amplitude_factors);
  EXPECT_NE(a.detuning_SD, sample_shot_noise(c, 5, 18).detuning_SD);
}

TEST(ShotNoiseTest, CorrelationModes) {
  NoiseConfig c;
  c.detuning_sigma_SD = 0.01;
  const ShotNoise shared = sample_shot_noise(c, 3, 0);
  EXPECT_EQ(shared.detuning_SD[0], shared.detuning_SD[1]);
  EXPECT_EQ(shared.detuning_SD[1], shared.detuning_SD[2]);
  EXPECT_NEAR(shared.detuning_H[0], (1 + c.dephasing_ratio_H) * shared.detuning_SD[0], 1e-15);
  c.correlated_dephasing = false;
  const ShotNoise independent = sample_shot_noise(c, 3, 0);
  EXPECT_NE(independent.detuning_SD[0], independent.detuning_SD[1]);
}

TEST(ShotNoiseTest, Statistics) {
  NoiseConfig c;
  c.detuning_sigma_SD = 0.003;
  c.amplitude_error_sigma = 0.05;
  const int n = 100000;
  double s2 = 0.0, amp = 0.0;
  for (int k = 0; k < n; ++k) {
    const ShotNoise s = sample_shot_noise(c, 11, static_cast<std::uint64_t>(k));
    s2 += s.detuning_SD[0] * s.detuning_SD[0];
    amp += s.amplitude_factor(k % kDefaultPulseSlots);
  }
  EXPECT_NEAR(std::sqrt(s2 / n), c.detuning_sigma_SD, 0.02 * c.detuning_sigma_SD);
  EXPECT_NEAR(amp / n, 1.0, 3 * c.amplitude_error_sigma / std::sqrt(n));
}

TEST(Dephasing, PhaseAccrual) {
  const ShotNoise zero = fixed_detuning({}, {0.0});
  const trap::TrapRegister plus = plus_state();
  EXPECT_LT((accrue_phase(plus, 100.0, zero).density_matrix() - plus.density_matrix()).cwiseAbs().maxCoeff(),
            1e-15);

  const ShotNoise shot = fixed_detuning({}, {0.01});
  const trap::TrapRegister s = trap::initialize(1, 2);
  EXPECT_LT((accrue_phase(s, 50.0, shot).state_vector() - s.state_vector()).cwiseAbs().maxCoeff(),
            1e-15);

  const Complex before = sd_coherence(plus);
  const Complex after = sd_coherence(accrue_phase(plus, 30.0, shot));
  EXPECT_NEAR(std::arg(after / before), 0.01 * 30.0, 1e-12);

  const auto split = accrue_phase(accrue_phase(plus, 12.0, shot), 18.0, shot);
  const auto once = accrue_phase(plus, 30.0, shot);
  EXPECT_LT((split.state_vector() - once.state_vector()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dephasing, SpinEchoRefocuses) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.05);
  const trap::TrapRegister plus = plus_state();
  const PureState target(plus.state_vector());
  for (int t = 0; t < 20; ++t) {
    const ShotNoise shot = fixed_detuning({}, {g(rng)});
    auto reg = accrue_phase(plus, 40.0, shot);
    reg = trap::apply_pulse(reg, trap::Carrier{0, pi, 0.0});
    reg = accrue_phase(reg, 40.0, shot);
    // The echo pulse itself maps the state to a known image; undo it.
    reg = trap::apply_pulse(reg, trap::Carrier{0, pi, pi});
    const double f = std::norm(target.amplitudes().dot(reg.state_vector()));
    EXPECT_GE(f, 1 - 1e-10);
  }
}

TEST(Depolarizing, QubitExamples) {
  Matrix2c s = Matrix2c::Zero();
  s(0, 0) = 1.0;
  const DensityMatrix rho(s);
  EXPECT_EQ(apply_depolarizing(rho, 0.0).matrix(), rho.matrix());
  EXPECT_LT((apply_depolarizing(rho, 1.0).matrix() - 0.5 * ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(),
            1e-15);
  const ComplexMatrix out = apply_depolarizing(rho, 0.4).matrix();
  EXPECT_NEAR(out(0, 0).real(), 0.8, 1e-15);
  EXPECT_NEAR(out(1, 1).real(), 0.2, 1e-15);
}

TEST(Depolarizing, RegisterChannelIsPhysicalAndLeavesHideAlone) {
  std::mt19937_64 rng(6);
  const trap::RegisterDims dims{2, 2};
  for (double p : {0.0, 0.3, 0.75, 1.0}) {
    ComplexVector psi = random_pure_state(dims.dim(), rng).amplitudes();
    const auto reg = trap::TrapRegister::from_state(dims, psi);
    const auto out = apply_depolarizing(reg, 1, p);
    EXPECT_NEAR(out.trace(), 1.0, 1e-12);
    const ComplexMatrix rho = out.density_matrix();
    EXPECT_GE(min_eigenvalue(rho), -1e-12);
    EXPECT_NEAR(out.level_population(1, trap::IonLevel::H), reg.level_population(1, trap::IonLevel::H), 1e-12);
    EXPECT_LE((rho * rho).trace().real(), 1.0 + 1e-12);
  }
}

TEST(Depolarizing, RegisterMatchesPauliSumWithoutHide) {
  const trap::RegisterDims dims{2, 2};
  const double p = 0.37;
  auto reg = trap::initialize(2, 2);
  reg = trap::apply_pulse(reg, trap::Carrier{0, 1.1, 0.4});
  reg = trap::apply_pulse(reg, trap::Carrier{1, 0.7, 1.3}).to_density();
  ComplexMatrix expected = (1 - 3 * p / 4) * reg.density();
  for (Pauli q : {Pauli::X, Pauli::Y, Pauli::Z}) {
    const ComplexMatrix u = trap::embed(pauli_local(dims, 0, q), dims);
    expected += (p / 4) * u * reg.density() * u.adjoint();
  }
  EXPECT_LT((apply_depolarizing(reg, 0, p).density() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Depolarizing, PauliSamplingFrequencies) {
  std::mt19937_64 rng(8);
  const double p = 0.4;
  const int n = 100000;
  int identity = 0;
  for (int k = 0; k < n; ++k) identity += sample_depolarizing_pauli(p, rng) == Pauli::I;
  const double q = 1 - 3 * p / 4;
  EXPECT_LE(std::abs(identity - n * q), 5 * std::sqrt(n * q * (1 - q)));
}

TEST(Amplitude, PerturbPulse) {
  ShotNoise s = fixed_detuning({}, {0.0});
  EXPECT_EQ(std::get<trap::Carrier>(perturb_pulse(trap::Carrier{0, pi, 0.0}, s, 3)).theta, pi);
  s.amplitude_factors.assign(kDefaultPulseSlots, 1.02);
  EXPECT_NEAR(std::get<trap::Carrier>(perturb_pulse(trap::Carrier{0, pi, 0.0}, s, 3)).theta, 1.02 * pi,
              1e-15);
  EXPECT_THROW(perturb_pulse(trap::Wait{1.0}, s, 0), std::invalid_argument);
}

TEST(Durations, ScaleWithArea) {
  const PulseDurations d;
  EXPECT_NEAR(pulse_duration(trap::Carrier{0, pi, 0.0}, d), d.carrier_pi_us, 1e-15);
  EXPECT_NEAR(pulse_duration(trap::BlueSideband{0, pi / 2, 0.0}, d), d.sideband_pi_us / 2, 1e-15);
  EXPECT_NEAR(pulse_duration(trap::Wait{300.0}, d), 300.0, 1e-15);
  EXPECT_NEAR(pulse_duration(trap::Detect{0}, d), 250.0, 1e-15);
}

TEST(Quadrature, GaussHermiteMoments) {
  for (int n : {3, 5, 24}) {
    const auto rule = gauss_hermite(n);
    double w = 0.0, m2 = 0.0, m4 = 0.0;
    for (int k = 0; k < n; ++k) {
      w += rule.weights[k];
      m2 += rule.weights[k] * std::pow(rule.nodes[k], 2);
      m4 += rule.weights[k] * std::pow(rule.nodes[k], 4);
    }
    EXPECT_NEAR(w, 1.0, 1e-12);
    EXPECT_NEAR(m2, 1.0, 1e-12);
    EXPECT_NEAR(m4, 3.0, 1e-11);
  }
}
