#pragma once

// N three-level ions (S, D and the hide level H) sharing one truncated
// motional mode. Register ordering is ion 0 (most significant) ... ion N-1,
// then the Fock index n in [0, fock_cutoff).

#include <functional>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "iontele/quantum_core.hpp"
#include "iontele/tolerances.hpp"

namespace iontele::trap {

enum class IonLevel : int { S = 0, D = 1, H = 2 };
inline constexpr int kLevelsPerIon = 3;

struct RegisterDims {
  int n_ions = 0;
  int fock_cutoff = 0;

  int dim() const;
  /// {3, 3, ..., 3, fock_cutoff}; the last entry is the motional mode.
  std::vector<int> subsystem_dims() const;
  int motion_subsystem() const { return n_ions; }
};

// Pulses. Angles in radians, durations in microseconds.
struct Carrier {
  int ion = 0;
  double theta = 0.0;
  double phi = 0.0;
};
struct BlueSideband {
  int ion = 0;
  double theta = 0.0;
  double phi = 0.0;
};
struct Hide {
  int ion = 0;
  double theta = 0.0;
  double phi = 0.0;
};
struct Wait {
  double duration_us = 0.0;
};
struct Detect {
  int ion = 0;
};

using Pulse = std::variant<Carrier, BlueSideband, Hide, Wait, Detect>;

/// Throws std::invalid_argument on a negative area, a bad ion index or a
/// negative wait.
void validate_pulse(const Pulse& pulse, const RegisterDims& dims);

/// Ion addressed by a pulse; std::nullopt for Wait.
std::optional<int> addressed_ion(const Pulse& pulse);

/// [[cos(t/2), -i e^{i phi} sin(t/2)], [-i e^{-i phi} sin(t/2), cos(t/2)]]
/// The single rotation form used for carrier, sideband and hide transitions.
Matrix2c rotation(double theta, double phi);

/// Operator acting on a subset of register subsystems (listed in increasing
/// order); its dimension is the product of those subsystem dimensions.
struct LocalOperator {
  ComplexMatrix op;
  std::vector<int> subsystems;
};

LocalOperator carrier_local(const RegisterDims& dims, int ion, double theta, double phi);
LocalOperator sideband_local(const RegisterDims& dims, int ion, double theta, double phi);
LocalOperator hide_local(const RegisterDims& dims, int ion, double theta, double phi);

/// Local operator for Carrier/BlueSideband/Hide; throws for Wait/Detect.
LocalOperator pulse_local(const RegisterDims& dims, const Pulse& pulse);

/// Lifts a local operator to the full register (identity elsewhere).
ComplexMatrix embed(const LocalOperator& local, const RegisterDims& dims);

ComplexMatrix carrier_unitary(const RegisterDims& dims, int ion, double theta, double phi);
ComplexMatrix sideband_unitary(const RegisterDims& dims, int ion, double theta, double phi);
ComplexMatrix hide_unitary(const RegisterDims& dims, int ion, double theta, double phi);

/// Register state, either a state vector or a density operator over
/// 3^n_ions * fock_cutoff dimensions, with a leakage monitor on the top Fock
/// level and elapsed-time bookkeeping.
class TrapRegister {
 public:
  /// |S...S> (x) |n=0>, pure representation.
  static TrapRegister initialize(int n_ions, int fock_cutoff,
                                 double leakage_budget = tol::kDefaultLeakageBudget);

  static TrapRegister from_state(const RegisterDims& dims, ComplexVector psi,
                                 double leakage_budget = tol::kDefaultLeakageBudget);
  static TrapRegister from_density(const RegisterDims& dims, ComplexMatrix rho,
                                   double leakage_budget = tol::kDefaultLeakageBudget);

  const RegisterDims& dims() const { return dims_; }
  bool is_pure() const { return std::holds_alternative<ComplexVector>(state_); }
  const ComplexVector& state_vector() const;
  const ComplexMatrix& density() const;
  /// Density operator regardless of representation.
  ComplexMatrix density_matrix() const;
  TrapRegister to_density() const;

  double trace() const;
  double leakage_budget() const { return leakage_budget_; }
  double top_fock_population() const;
  double max_top_fock_population() const { return max_top_fock_; }
  double elapsed_us() const { return elapsed_us_; }

  /// Population of `level` on `ion`.
  double level_population(int ion, IonLevel level) const;

  // In-place primitives. The free functions below are the value-semantic API;
  // these exist so inner loops avoid copies.
  void apply(const LocalOperator& local);
  /// Multiplies basis state k by phases[k] (rho -> D rho D^dag).
  void apply_diagonal(const ComplexVector& phases);
  /// Keeps only basis states with mask[k] == true; no renormalisation.
  void project(const std::vector<bool>& mask);
  void scale(double factor);
  /// this += weight * other; both registers must be in density form.
  void accumulate(const TrapRegister& other, double weight);
  /// Density form only: replaces every 3x3 block rho[(.., i, ..), (.., j, ..)]
  /// over the levels i, j of `ion` (other indices fixed) by f(block). Cheap
  /// route for single-ion channels.
  void transform_ion_blocks(int ion,
                            const std::function<Eigen::Matrix3cd(const Eigen::Matrix3cd&)>& f);
  void normalize();
  void advance_time(double us) { elapsed_us_ += us; }
  /// Records the current top-Fock population; throws LeakageError above budget.
  void check_leakage();

 private:
  TrapRegister(const RegisterDims& dims, std::variant<ComplexVector, ComplexMatrix> state,
               double leakage_budget);

  RegisterDims dims_;
  std::variant<ComplexVector, ComplexMatrix> state_;
  double leakage_budget_;
  double max_top_fock_ = 0.0;
  double elapsed_us_ = 0.0;
};

TrapRegister initialize(int n_ions, int fock_cutoff);

/// Applies a Carrier/BlueSideband/Hide unitary or advances time for a Wait.
/// Detect is rejected (use fluorescence_measure). Throws LeakageError when
/// the top Fock level exceeds the budget.
TrapRegister apply_pulse(TrapRegister reg, const Pulse& pulse);

enum class Outcome { Bright, Dark };

Outcome flip(Outcome o);

/// Mask of basis states where `ion` is in S (Bright) or in D/H (Dark).
std::vector<bool> fluorescence_mask(const RegisterDims& dims, int ion, Outcome outcome);

struct MeasurementResult {
  Outcome outcome;         // reported, possibly flipped by detection error
  Outcome true_outcome;    // outcome used for the collapse
  double probability;      // Born probability of true_outcome
  TrapRegister reg;        // normalised post-measurement register
};

/// Projective fluorescence measurement of one ion. Bright projects onto S,
/// Dark onto span{D, H}. The reported outcome flips with probability
/// `detection_error`; the collapse always uses the true outcome.
MeasurementResult fluorescence_measure(TrapRegister reg, int ion, std::mt19937_64& rng,
                                       double detection_error = 0.0);

/// Deterministic replay of a given outcome. Throws InvariantViolation when
/// the requested branch has zero probability.
MeasurementResult fluorescence_project(TrapRegister reg, int ion, Outcome outcome);

}  // namespace iontele::trap
