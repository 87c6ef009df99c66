#pragma once

// Deterministic three-ion teleportation: the 35-step laser pulse sequence,
// a Monte-Carlo shot runner, an exact (infinite statistics) density-matrix
// runner, fidelity estimation and calibration of the reconstruction phase.
//
// Ions are 0-based in code (ion 0 carries the input, ions 1 and 2 hold the
// Bell pair, ion 2 is the target). Listings print them 1-based.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "iontele/ion_trap.hpp"
#include "iontele/noise_model.hpp"
#include "iontele/quantum_core.hpp"

namespace iontele::protocol {

using trap::Outcome;

inline constexpr int kSourceIon = 0;
inline constexpr int kAncillaIon = 1;
inline constexpr int kTargetIon = 2;
inline constexpr int kNumIons = 3;

/// Input |chi> = R^C(theta_chi, phi_chi) |S> on the source ion.
struct InputStateSpec {
  double theta_chi = 0.0;
  double phi_chi = 0.0;
  std::string label;
};

/// psi1 = |S>, psi2 = |D>, psi3 = (|D> - i|S>)/sqrt2, psi4 = (|D> - |S>)/sqrt2,
/// psi5 = (|D> + i|S>)/sqrt2, psi6 = (|D> + |S>)/sqrt2 (up to global phase).
const std::array<InputStateSpec, 6>& canonical_inputs();

PureState input_state(const InputStateSpec& spec);

enum class Basis { Z, X, Y };
const char* basis_name(Basis b);

struct FidelityCheck {};
struct Tomography {
  Basis basis = Basis::Z;
};
using Mode = std::variant<FidelityCheck, Tomography>;

struct ProtocolOptions {
  int fock_cutoff = 4;
  double leakage_budget = tol::kDefaultLeakageBudget;
  /// Stand-by between Bell preparation and teleportation (row 7).
  double standby_us = 1.0;
  /// Rephasing wait after the Bell measurement (row 28).
  double rephase_wait_us = 300.0;
  /// When false, rows 16-18 are dropped and the target-ion echo rotation is
  /// applied right after the final unhide instead, which leaves the ideal
  /// sequence unchanged but removes the refocusing.
  bool spin_echo = true;
  /// When false, the conditional rows 31-33 are dropped.
  bool reconstruction = true;
  /// Gauss-Hermite nodes per independent detuning in exact mode.
  int dephasing_nodes = 24;
  /// Gauss-Hermite nodes per pulse for pulse-area noise in exact mode.
  int amplitude_nodes = 5;
};

enum class StepRole {
  Initialization,
  BellPreparation,
  Standby,
  InputPreparation,
  BellRotation,
  Readout,
  Rephase,
  Reconstruction,
  Analysis,
  FinalReadout,
};

struct Marker {
  std::string action;  // e.g. "Light at 397 nm"
};

enum class ReadoutChannel { Pmt, Camera };

struct Readout {
  trap::Detect detect;
  ReadoutChannel channel = ReadoutChannel::Pmt;
  /// PMT record this readout fills (1 or 2); 0 for an unrecorded readout.
  int record = 0;
};

/// Pulse applied only when PMT record `record` reported `when`.
struct ConditionalPulse {
  int record = 1;
  Outcome when = Outcome::Dark;
  trap::Pulse pulse;
};

using Action = std::variant<Marker, trap::Pulse, Readout, ConditionalPulse>;

struct SequenceStep {
  int step_id = 0;
  Action action;
  std::string comment;
  StepRole role = StepRole::Initialization;
  bool uses_phase_offset = false;
};

using Sequence = std::vector<SequenceStep>;

Sequence build_sequence(const InputStateSpec& input, double phase_offset, Mode mode,
                        const ProtocolOptions& options = {});

/// Throws std::invalid_argument when step ids decrease (one table row may
/// expand to several steps sharing its id),
/// a conditional references a record not filled earlier, or a pulse is
/// invalid for a three-ion register.
void validate_sequence(const Sequence& sequence, const ProtocolOptions& options = {});

/// Human-readable listing mirroring the pulse table: one line per step.
std::string format_sequence(const Sequence& sequence);

// ---------------------------------------------------------------------------
// Monte-Carlo shots

enum class BranchLabel { SS = 0, SD = 1, DS = 2, DD = 3 };
const char* branch_name(BranchLabel b);
/// Bright == S, Dark == D.
BranchLabel branch_of(Outcome pmt1, Outcome pmt2);

struct ShotRecord {
  std::uint64_t shot_index = 0;
  Outcome pmt1 = Outcome::Bright;
  Outcome pmt2 = Outcome::Bright;
  Outcome final_outcome = Outcome::Bright;
  BranchLabel branch = BranchLabel::SS;
};

ShotRecord run_shot(const Sequence& sequence, const noise::NoiseConfig& noise,
                    std::uint64_t master_seed, std::uint64_t shot_index,
                    const ProtocolOptions& options = {});

/// Runs shots [0, n_shots) on `workers` threads; results are ordered by shot
/// index and independent of the worker count.
std::vector<ShotRecord> run_shots(const Sequence& sequence, const noise::NoiseConfig& noise,
                                  std::uint64_t master_seed, std::uint64_t n_shots,
                                  const ProtocolOptions& options = {}, int workers = 1);

// ---------------------------------------------------------------------------
// Exact evolution

/// Target-ion state for one reported PMT branch, weighted by its probability.
struct BranchOutput {
  BranchLabel branch;
  double probability;
  DensityMatrix state;  // qubit {S, D}, analysis frame
};

struct ExactDiagnostics {
  double residual_hide_population = 0.0;
  double residual_motional_population = 0.0;
  double max_top_fock_population = 0.0;
};

/// Exact evolution of the full sequence (averaged over quasi-static detuning
/// by Gauss-Hermite quadrature, with depolarizing and pulse-area noise as
/// channels and detection errors as classical mixing of the records).
///
/// The part of the sequence before the reconstruction phase is evolved once;
/// `output(phase_offset)` then only replays the target-ion reconstruction,
/// which keeps phase scans cheap.
class ExactEngine {
 public:
  ExactEngine(const InputStateSpec& input, const noise::NoiseConfig& noise,
              const ProtocolOptions& options = {});

  /// Runs an arbitrary three-ion sequence built with offset `built_offset`.
  /// Steps from the first one flagged uses_phase_offset onwards form the
  /// replayed suffix; their pulse phases are shifted for other offsets.
  ExactEngine(const Sequence& sequence, const noise::NoiseConfig& noise,
              const ProtocolOptions& options, double built_offset = 0.0);

  /// Target-ion state after reconstruction, in the frame of the analysis
  /// pulses (the offset phase is undone), H population folded out.
  DensityMatrix output(double phase_offset) const;

  std::vector<BranchOutput> branch_outputs(double phase_offset) const;

  /// Target-ion 3x3 state (S, D, H) averaged over branches just before the
  /// reconstruction phase.
  ComplexMatrix pre_reconstruction_state() const;

  /// Probability that the final target readout reports Bright, i.e. the
  /// quantity a FidelityCheck or Tomography experiment estimates. Requires
  /// the sequence to contain its Analysis/FinalReadout steps.
  double final_bright_probability(double phase_offset) const;

  const ExactDiagnostics& diagnostics() const { return diagnostics_; }

  /// Copy of this engine with the replayed part taken from `sequence`, which
  /// must share this engine's prefix step ids (e.g. the same run in another
  /// tomography basis). The expensive prefix is not re-evolved.
  ExactEngine with_suffix_from(const Sequence& sequence) const;

 private:
  struct ReducedBranch {
    double weight;
    std::array<std::optional<Outcome>, 3> records;
    ComplexMatrix target_state;  // 3x3 over S, D, H, unnormalised
    double detuning_SD;
    double detuning_H;
  };

  void run_prefix(const Sequence& prefix);
  std::vector<ReducedBranch> replay_suffix(double phase_offset, bool include_analysis) const;

  void set_suffix(const Sequence& sequence);

  Sequence suffix_template_;
  std::vector<int> prefix_ids_;
  double built_offset_ = 0.0;
  noise::NoiseConfig noise_;
  ProtocolOptions options_;
  std::vector<ReducedBranch> branches_;
  ExactDiagnostics diagnostics_;
};

/// Target-ion state after teleportation (rows 1-33), infinite statistics.
DensityMatrix run_exact(const InputStateSpec& input, double phase_offset,
                        const noise::NoiseConfig& noise, const ProtocolOptions& options = {});

struct Exact {};
struct Sampled {
  std::uint64_t shots = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};
using EstimationMode = std::variant<Exact, Sampled>;

struct FidelityEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Exact: <chi| rho_exp |chi>. Sampled: Bright frequency of the final readout
/// over shots in FidelityCheck mode, with its binomial standard error.
FidelityEstimate teleportation_fidelity(const InputStateSpec& input,
                                        const noise::NoiseConfig& noise, EstimationMode mode,
                                        double phase_offset = 0.0,
                                        const ProtocolOptions& options = {});

struct CalibrationResult {
  double phase_offset = 0.0;
  double fidelity = 0.0;
  /// (phi, fidelity) over the grid plus the closing point phi = 2pi.
  std::vector<std::pair<double, double>> sweep;
};

/// Grid search over [0, 2pi) with `grid_points` >= 8, refined by one
/// golden-section pass around the best grid point.
CalibrationResult calibrate_phase(const noise::NoiseConfig& noise,
                                  const InputStateSpec& reference_input, int grid_points,
                                  const ProtocolOptions& options = {});

/// Fidelity of measuring `psi` in the S/D basis and re-preparing the
/// observed eigenstate.
double measure_and_resend_fidelity(const PureState& psi);

/// Six-state average fidelity of the measure-and-resend strategy (2/3).
double classical_baseline();

}  // namespace iontele::protocol
