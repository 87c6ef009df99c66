#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "iontele/errors.hpp"
#include "iontele/ion_trap.hpp"
#include "iontele/protocol.hpp"

using namespace iontele;
using namespace iontele::trap;
using std::numbers::pi;

namespace {

int index_of(const RegisterDims& dims, std::vector<int> levels, int n) {
  int k = 0;
  for (int l : levels) k = k * kLevelsPerIon + l;
  return k * dims.fock_cutoff + n;
}

TrapRegister basis_register(const RegisterDims& dims, std::vector<int> levels, int n) {
  ComplexVector psi = ComplexVector::Zero(dims.dim());
  psi(index_of(dims, std::move(levels), n)) = 1.0;
  return TrapRegister::from_state(dims, psi);
}

}  // namespace

TEST(Register, Initialisation) {
  const TrapRegister reg = initialize(3, 4);
  EXPECT_EQ(reg.dims().dim(), 108);
  EXPECT_TRUE(reg.is_pure());
  EXPECT_EQ(reg.state_vector()(0), Complex(1.0));
  EXPECT_NEAR(reg.to_density().trace(), 1.0, 1e-15);
  EXPECT_EQ(initialize(1, 2).dims().dim(), 6);
  EXPECT_THROW(initialize(0, 4), std::invalid_argument);
  EXPECT_THROW(initialize(3, 1), std::invalid_argument);
}

TEST(Pulses, CarrierExamples) {
  const RegisterDims dims{1, 2};
  EXPECT_LT((carrier_unitary(dims, 0, 0.0, 0.3) - ComplexMatrix::Identity(6, 6)).cwiseAbs().maxCoeff(),
            1e-15);
  const TrapRegister out = apply_pulse(initialize(1, 2), Carrier{0, pi, 0.0});
  const Complex d = out.state_vector()(index_of(dims, {1}, 0));
  EXPECT_NEAR(std::abs(d - Complex(0.0, -1.0)), 0.0, 1e-15);

  for (double phi : {0.0, 0.4, 2.0}) {
    const ComplexMatrix prod =
        carrier_unitary(dims, 0, pi / 2, phi + pi) * carrier_unitary(dims, 0, pi / 2, phi);
    EXPECT_LT((prod - ComplexMatrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Pulses, SidebandScalesWithPhononNumber) {
  const RegisterDims dims{1, 4};
  EXPECT_LT((sideband_unitary(dims, 0, 0.0, 0.0) - ComplexMatrix::Identity(12, 12)).cwiseAbs().maxCoeff(),
            1e-15);
  const TrapRegister out = apply_pulse(basis_register(dims, {0}, 0), BlueSideband{0, pi, 0.7});
  EXPECT_NEAR(std::abs(out.state_vector()(index_of(dims, {1}, 1))), 1.0, 1e-14);

  // Area pi/sqrt2 on n=0 becomes area pi on the n=1 block.
  const TrapRegister one = apply_pulse(basis_register(dims, {0}, 1), BlueSideband{0, pi / std::sqrt(2.0), 0.0});
  EXPECT_NEAR(std::abs(one.state_vector()(index_of(dims, {1}, 2))), 1.0, 1e-14);
  const TrapRegister zero = apply_pulse(basis_register(dims, {0}, 0), BlueSideband{0, pi / std::sqrt(2.0), 0.0});
  EXPECT_NEAR(std::norm(zero.state_vector()(index_of(dims, {1}, 1))), 0.5 * (1 - std::cos(pi / std::sqrt(2.0))), 1e-14);
}

TEST(Pulses, SidebandFixesDZeroAndHideLevels) {
  const RegisterDims dims{1, 4};
  const ComplexMatrix u = sideband_unitary(dims, 0, 1.3, 0.4);
  for (int n = 0; n < 4; ++n) {
    const int h = index_of(dims, {2}, n);
    EXPECT_NEAR(std::abs(u(h, h) - 1.0), 0.0, 1e-15);
  }
  const int d0 = index_of(dims, {1}, 0);
  EXPECT_NEAR(std::abs(u(d0, d0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(u.col(d0).norm(), 1.0, 1e-15);
}

TEST(Pulses, HideAndUnhide) {
  const RegisterDims dims{1, 2};
  const ComplexMatrix prod = hide_unitary(dims, 0, pi, pi) * hide_unitary(dims, 0, pi, 0.0);
  EXPECT_LT((prod - ComplexMatrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-14);
  const TrapRegister hidden = apply_pulse(initialize(1, 2), Hide{0, pi, 0.0});
  EXPECT_LT(hidden.level_population(0, IonLevel::S), 1e-24);
  EXPECT_NEAR(hidden.level_population(0, IonLevel::H), 1.0, 1e-14);
  EXPECT_LT((hide_unitary(dims, 0, 0.0, 1.0) - ComplexMatrix::Identity(6, 6)).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(Pulses, RandomUnitarity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> theta(0.0, 4 * pi), phi(0.0, 2 * pi);
  const RegisterDims dims{3, 4};
  for (int t = 0; t < 20; ++t) {
    const double a = theta(rng), b = phi(rng);
    const int ion = t % 3;
    EXPECT_LE(unitarity_error(carrier_unitary(dims, ion, a, b)), 1e-12);
    EXPECT_LE(unitarity_error(sideband_unitary(dims, ion, a, b)), 1e-12);
    EXPECT_LE(unitarity_error(hide_unitary(dims, ion, a, b)), 1e-12);
  }
}

TEST(Pulses, ValidationAndNormPreservation) {
  EXPECT_THROW(apply_pulse(initialize(3, 4), Carrier{3, pi, 0.0}), std::invalid_argument);
  EXPECT_THROW(apply_pulse(initialize(3, 4), Carrier{0, -1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(apply_pulse(initialize(3, 4), Wait{-1.0}), std::invalid_argument);
  EXPECT_THROW(apply_pulse(initialize(3, 4), Detect{0}), std::invalid_argument);
  EXPECT_EQ(apply_pulse(initialize(3, 4), Carrier{0, 0.0, 0.0}).state_vector(),
            initialize(3, 4).state_vector());
  TrapRegister reg = initialize(3, 4);
  reg = apply_pulse(reg, Carrier{0, 1.1, 0.2});
  reg = apply_pulse(reg, BlueSideband{0, 0.8, 1.0});
  reg = apply_pulse(reg, Hide{1, 0.5, 0.0});
  EXPECT_NEAR(reg.state_vector().norm(), 1.0, 1e-12);
  EXPECT_NEAR(apply_pulse(reg, Wait{12.0}).elapsed_us(), 12.0, 1e-15);
}

TEST(Pulses, BellPreparationRows) {
  using namespace iontele::protocol;
  const Sequence seq = build_sequence(canonical_inputs()[0], 0.0, FidelityCheck{});
  TrapRegister reg = initialize(3, 4);
  for (const auto& step : seq) {
    if (step.role != StepRole::BellPreparation) continue;
    reg = apply_pulse(reg, std::get<Pulse>(step.action));
  }
  const RegisterDims& dims = reg.dims();
  const Complex a = reg.state_vector()(index_of(dims, {0, 1, 0}, 0));
  const Complex b = reg.state_vector()(index_of(dims, {0, 0, 1}, 0));
  // (|DS> + |SD>)/sqrt2 on ancilla and target, motion back in n = 0.
  EXPECT_NEAR(std::norm(a), 0.5, 1e-12);
  EXPECT_NEAR(std::norm(b), 0.5, 1e-12);
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-12);
}

TEST(Leakage, MonitorThrowsAboveBudget) {
  const RegisterDims dims{1, 2};
  TrapRegister reg = TrapRegister::from_state(dims, basis_register(dims, {0}, 0).state_vector(), 1e-9);
  EXPECT_THROW(apply_pulse(reg, BlueSideband{0, pi / 2, 0.0}), LeakageError);
  TrapRegister loose = TrapRegister::from_state(dims, reg.state_vector(), 1.0);
  EXPECT_NO_THROW(apply_pulse(loose, BlueSideband{0, pi / 2, 0.0}));
}

TEST(Leakage, NoiselessSequenceStaysBelowBudget) {
  using namespace iontele::protocol;
  for (const auto& in : canonical_inputs()) {
    const ExactEngine engine(in, {});
    EXPECT_LE(engine.diagnostics().max_top_fock_population, 1e-9) << in.label;
  }
}

TEST(Measurement, BornRuleExamples) {
  std::mt19937_64 rng(7);
  const auto bright = fluorescence_measure(initialize(1, 2), 0, rng);
  EXPECT_EQ(bright.outcome, Outcome::Bright);
  EXPECT_NEAR(bright.probability, 1.0, 1e-15);

  const RegisterDims dims{2, 2};
  ComplexVector bell = ComplexVector::Zero(dims.dim());
  bell(index_of(dims, {1, 0}, 0)) = 1.0 / std::sqrt(2.0);
  bell(index_of(dims, {0, 1}, 0)) = 1.0 / std::sqrt(2.0);
  const TrapRegister reg = TrapRegister::from_state(dims, bell);
  const auto b = fluorescence_project(reg, 0, Outcome::Bright);
  EXPECT_NEAR(b.probability, 0.5, 1e-15);
  EXPECT_NEAR(std::abs(b.reg.state_vector()(index_of(dims, {0, 1}, 0))), 1.0, 1e-15);
  EXPECT_THROW(fluorescence_project(initialize(1, 2), 0, Outcome::Dark), InvariantViolation);
}

TEST(Measurement, HiddenIonIsDarkAndKeepsCoherence) {
  const RegisterDims dims{1, 2};
  ComplexVector psi = ComplexVector::Zero(dims.dim());
  psi(index_of(dims, {1}, 0)) = 0.6;
  psi(index_of(dims, {2}, 0)) = Complex(0.0, 0.8);
  const TrapRegister reg = TrapRegister::from_state(dims, psi);
  std::mt19937_64 rng(8);
  const auto m = fluorescence_measure(reg, 0, rng);
  EXPECT_EQ(m.outcome, Outcome::Dark);
  EXPECT_NEAR(m.probability, 1.0, 1e-15);
  EXPECT_LT((m.reg.state_vector() - psi).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Measurement, FrequenciesFollowBornRule) {
  const RegisterDims dims{1, 2};
  const TrapRegister reg = apply_pulse(initialize(1, 2), Carrier{0, 1.0, 0.0});
  const double p = std::pow(std::cos(0.5), 2);
  std::mt19937_64 rng(9);
  const int n = 100000;
  int bright = 0;
  for (int k = 0; k < n; ++k) bright += fluorescence_measure(reg, 0, rng).outcome == Outcome::Bright;
  EXPECT_LE(std::abs(bright - n * p), 5 * std::sqrt(n * p * (1 - p)));
}

TEST(Measurement, DensityCollapseStaysPhysical) {
  const TrapRegister reg =
      apply_pulse(initialize(2, 3), Carrier{0, 1.0, 0.3}).to_density();
  for (Outcome o : {Outcome::Bright, Outcome::Dark}) {
    const auto m = fluorescence_project(reg, 0, o);
    EXPECT_LT(hermiticity_error(m.reg.density()), 1e-14);
    EXPECT_GE(min_eigenvalue(m.reg.density()), -1e-12);
    EXPECT_NEAR(m.reg.trace(), 1.0, 1e-12);
  }
}

TEST(Measurement, DetectionErrorFlipsReportOnly) {
  std::mt19937_64 rng(10);
  const auto m = fluorescence_measure(initialize(1, 2), 0, rng, 1.0);
  EXPECT_EQ(m.outcome, Outcome::Dark);
  EXPECT_EQ(m.true_outcome, Outcome::Bright);
  EXPECT_NEAR(m.reg.level_population(0, IonLevel::S), 1.0, 1e-15);
}
