#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "iontele/ion_trap.hpp"
#include "iontele/quantum_core.hpp"

namespace iontele::noise {

/// Durations of pi pulses and of one fluorescence detection, in microseconds.
/// A pulse of area theta lasts (theta / pi) times its pi-pulse duration.
struct PulseDurations {
  double carrier_pi_us = 10.0;
  double sideband_pi_us = 100.0;
  double hide_pi_us = 10.0;
  double detection_us = 250.0;
};

struct NoiseConfig {
  /// Std-dev of the quasi-static S<->D detuning, rad/us.
  double detuning_sigma_SD = 0.0;
  /// Systematic S<->D detuning added to every realisation, rad/us.
  double static_detuning_SD = 0.0;
  /// Sensitivity of the hidden D<->H coherence relative to S<->D. The H
  /// level is shifted by (1 + ratio) * detuning, so a hidden superposition
  /// dephases `ratio` times faster than an unhidden one.
  double dephasing_ratio_H = 2.0;
  /// Fractional std-dev of each pulse area.
  double amplitude_error_sigma = 0.0;
  /// Depolarizing probability on the addressed ion after every pulse.
  double depolarizing_per_pulse = 0.0;
  /// Probability that a reported fluorescence outcome is flipped.
  double detection_error = 0.0;
  /// One detuning shared by all ions (true) or an independent draw per ion.
  bool correlated_dephasing = true;
  PulseDurations durations{};

  /// Throws std::invalid_argument when a probability leaves [0,1] or a sigma
  /// or duration is negative.
  void validate() const;

  bool is_noiseless() const;
};

/// One quasi-static realisation of the noise for a single shot.
struct ShotNoise {
  std::vector<double> detuning_SD;        // per ion, rad/us
  std::vector<double> detuning_H;         // per ion, rad/us
  std::vector<double> amplitude_factors;  // per pulse index

  double amplitude_factor(int pulse_index) const;
};

inline constexpr int kDefaultPulseSlots = 64;

/// Independent random streams derived from (master_seed, shot_index, tag);
/// never from thread identity or execution order.
std::mt19937_64 make_stream(std::uint64_t master_seed, std::uint64_t shot_index,
                            std::uint64_t tag);

inline constexpr std::uint64_t kNoiseStream = 1;
inline constexpr std::uint64_t kMeasurementStream = 2;
inline constexpr std::uint64_t kPauliStream = 3;

ShotNoise sample_shot_noise(const NoiseConfig& config, std::uint64_t master_seed,
                            std::uint64_t shot_index, int n_ions = 3,
                            int pulse_slots = kDefaultPulseSlots);

/// Noise realisation with the given S<->D detuning on every ion and unit
/// pulse-area factors.
ShotNoise fixed_detuning(const NoiseConfig& config, std::vector<double> detuning_SD,
                         int pulse_slots = kDefaultPulseSlots);

/// exp(-i t sum_ions [detuning_SD P_D + detuning_H P_H]); S is the phase
/// reference.
trap::TrapRegister accrue_phase(trap::TrapRegister reg, double duration_us,
                                const ShotNoise& shot_noise);

/// rho -> (1 - 3p/4) rho + p/4 (X rho X + Y rho Y + Z rho Z) on the {S, D}
/// subspace of `ion`; the H level is left alone. Converts a pure register to
/// its density form.
trap::TrapRegister apply_depolarizing(trap::TrapRegister reg, int ion, double p);

/// Qubit version of the same channel.
DensityMatrix apply_depolarizing(const DensityMatrix& rho, double p);

/// Pauli on the {S, D} subspace of `ion` (identity on H).
trap::LocalOperator pauli_local(const trap::RegisterDims& dims, int ion, Pauli p);

/// Draws I with probability 1 - 3p/4 and X, Y, Z with p/4 each.
Pauli sample_depolarizing_pauli(double p, std::mt19937_64& rng);

/// Scales theta of a Carrier/BlueSideband/Hide pulse by the realisation's
/// factor for `pulse_index`. Throws std::invalid_argument for Wait/Detect.
trap::Pulse perturb_pulse(const trap::Pulse& pulse, const ShotNoise& shot_noise,
                          int pulse_index);

/// Duration of a pulse per the duration table (nominal area).
double pulse_duration(const trap::Pulse& pulse, const PulseDurations& durations);

/// Gauss-Hermite rule for expectations over a standard normal variable:
/// E[f(x)] ~= sum_k weights[k] f(nodes[k]); weights sum to 1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_hermite(int n);

}  // namespace iontele::noise
