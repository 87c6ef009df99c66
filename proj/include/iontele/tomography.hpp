#pragma once

// Single-qubit state and process tomography on the target ion: count tables,
// maximum-likelihood reconstruction, fidelity measures and the affine Bloch
// map of a channel.

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "iontele/process_matrix.hpp"
#include "iontele/protocol.hpp"
#include "iontele/quantum_core.hpp"

namespace iontele::tomo {

using protocol::Basis;
using trap::Outcome;

inline constexpr std::array<Basis, 3> kBases{Basis::Z, Basis::X, Basis::Y};

/// Bright/Dark counts per measurement basis. In expected-count mode the
/// entries are Born probabilities (total 1 per basis) rather than integers.
struct CountsTable {
  struct Row {
    Basis basis;
    Outcome outcome;
    double count;
  };

  std::array<std::array<double, 2>, 3> counts{};  // [basis][Bright, Dark]
  double total_per_basis = 0.0;
  bool expected = false;

  double& at(Basis b, Outcome o);
  double at(Basis b, Outcome o) const;
  /// Ordered Z, X, Y x Bright, Dark.
  std::vector<Row> rows() const;
  /// Throws std::invalid_argument on negative or non-finite counts, an empty
  /// table, or a basis whose counts do not add up to total_per_basis.
  void validate() const;
};

/// Projector for `outcome` of the +/-1 Pauli measurement along `basis`;
/// Bright is the +1 eigenstate (Z: |S>).
Matrix2c outcome_projector(Basis basis, Outcome outcome);

/// Pre-rotation applied before the S/D readout for `basis` (identity for Z).
Matrix2c basis_rotation(Basis basis);

/// Probability of Bright after the pre-rotation, i.e. <S| R rho R^dag |S>.
double bright_probability(const DensityMatrix& rho, Basis basis);

/// Samples `shots_per_basis` readouts per basis. With 0 shots the table holds
/// expected counts. Each reported outcome flips with probability
/// `detection_error`.
CountsTable simulate_state_tomography(const DensityMatrix& rho, std::uint64_t shots_per_basis,
                                      std::mt19937_64& rng, double detection_error = 0.0);

/// Counts for the teleported target ion: Tomography-mode sequences per basis.
/// shots = 0 uses the exact engine (expected counts, detection errors
/// included); otherwise Monte-Carlo shots with basis-specific seeds.
CountsTable teleported_counts(const protocol::InputStateSpec& input,
                              const noise::NoiseConfig& noise, double phase_offset,
                              std::uint64_t shots, std::uint64_t seed, int workers = 1,
                              const protocol::ProtocolOptions& options = {});

// ---------------------------------------------------------------------------
// State reconstruction

struct StateMleOptions {
  double dilution = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 10000;
};

struct StateMleResult {
  DensityMatrix rho;
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
};

/// Frequency-weighted log-likelihood sum_j f_j log p_j(rho) (per-basis
/// frequencies, so the value does not scale with the shot count).
double log_likelihood(const CountsTable& counts, const DensityMatrix& rho);

/// Diluted R rho R fixed-point iteration. A step that would lower the
/// likelihood is retried with half the dilution.
StateMleResult mle_state(const CountsTable& counts, const StateMleOptions& options = {});

// ---------------------------------------------------------------------------
// Processes

using QubitMap = std::function<Matrix2c(const Matrix2c&)>;

/// Linear inversion of E(rho) = sum chi_mn A_m rho A_n^dag from the action of
/// an exactly known map on {I, X, Y, Z}. No positivity projection.
ProcessMatrix chi_from_channel(const QubitMap& channel);

struct ProcessMleOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 10000;
};

struct ProcessMleResult {
  ProcessMatrix chi;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;
};

/// Rank of the inputs as real 4-vectors (trace, Bloch vector), tolerance 1e-8.
int input_rank(const std::vector<DensityMatrix>& inputs);

/// Maximum-likelihood chi over CPTP maps. chi is parameterised as
/// W-normalised T^dag T (T lower triangular), so positivity and trace
/// preservation hold for every iterate; the log-likelihood is maximised by
/// BFGS with an analytic gradient. Throws std::invalid_argument for fewer
/// than 4 independent inputs.
ProcessMleResult mle_process(const std::vector<DensityMatrix>& inputs,
                             const std::vector<CountsTable>& outputs,
                             const ProcessMleOptions& options = {});

/// Log-likelihood and its gradient with respect to the 16 real parameters of
/// T (diagonal first, then real/imaginary parts of the strictly lower
/// triangle, row-major). Exposed for gradient checks.
struct ProcessObjective {
  double value;
  Eigen::VectorXd gradient;
};
ProcessObjective process_log_likelihood(const Eigen::VectorXd& params,
                                        const std::vector<DensityMatrix>& inputs,
                                        const std::vector<CountsTable>& outputs);
/// chi for a parameter vector (normalised to be trace preserving).
Matrix4c chi_from_params(const Eigen::VectorXd& params);

/// trace(chi_ideal chi). Writes a warning to std::cerr when chi_ideal is not
/// rank 1; the value is returned regardless.
double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal);

/// Mean of <psi|E(psi)|psi> over the six Pauli eigenstates.
double average_fidelity(const ProcessMatrix& chi);
double average_fidelity(const QubitMap& channel);

/// (2 f_proc + 1) / 3; throws std::invalid_argument outside [0, 1].
double avg_from_process_fidelity(double f_proc);

// ---------------------------------------------------------------------------
// Affine Bloch map r_out = O S r_in + b

struct AffineMap {
  Matrix3 M;  // Pauli transfer block, M = O S
  Matrix3 O;
  Matrix3 S;
  Vector3 b;
  double det_O = 1.0;
  /// Rotation angle of O in radians; NaN when det O = -1.
  double rotation_angle = 0.0;
  Vector3 s_eigenvalues;  // ascending
};

AffineMap affine_decompose(const ProcessMatrix& chi);

/// E(sigma) rebuilt from the affine map: (tr(sigma) I + (M r + tr(sigma) b).sigma) / 2.
Matrix2c affine_apply(const AffineMap& map, const Matrix2c& sigma);

/// Images of a latitude-longitude grid on the unit sphere: resolution + 1
/// latitudes (poles included) times `resolution` longitudes.
std::vector<Vector3> ellipsoid_mesh(const AffineMap& map, int resolution);

// ---------------------------------------------------------------------------
// Error bars

struct BootstrapSummary {
  int resamples = 0;
  double chi_II = 0.0;
  double process_fidelity = 0.0;
  double average_fidelity = 0.0;
  Vector3 b = Vector3::Zero();
  Vector3 s_eigenvalues = Vector3::Zero();
  double rotation_angle = 0.0;
};

/// Parametric bootstrap: output counts are redrawn from the fitted model's
/// binomial probabilities with the same shots per basis, refitted, and the
/// sample standard deviation of each summary quantity is returned. Inputs
/// stay fixed.
BootstrapSummary bootstrap_process(const std::vector<DensityMatrix>& inputs,
                                   const std::vector<CountsTable>& outputs,
                                   const ProcessMatrix& fitted, int resamples,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialisation

/// `basis,outcome,count` with rows ordered Z, X, Y x Bright, Dark.
std::string counts_to_csv(const CountsTable& counts);
CountsTable counts_from_csv(const std::string& text);

/// {"dim": n, "real": [...], "imag": [...]} with row-major entries.
std::string matrix_to_json(const ComplexMatrix& m);
ComplexMatrix matrix_from_json(const std::string& text);

std::string affine_to_json(const AffineMap& map);

}  // namespace iontele::tomo
