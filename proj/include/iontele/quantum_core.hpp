#pragma once

// Complex linear algebra and quantum-state primitives shared by the trap
// model, the teleportation protocol and the tomography layer.
//
// Computational basis convention used everywhere in this library:
//   |0> == |S>,  |1> == |D>,  Bloch +z == |S>.

#include <array>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace iontele {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline constexpr Complex kI{0.0, 1.0};

/// Normalised state vector. Construction fails unless the Euclidean norm is 1
/// within tol::kStructural.
class PureState {
 public:
  explicit PureState(ComplexVector amplitudes);

  /// Rescales `amplitudes` to unit norm; throws on a zero vector.
  static PureState normalized(ComplexVector amplitudes);

  int dim() const { return static_cast<int>(amplitudes_.size()); }
  const ComplexVector& amplitudes() const { return amplitudes_; }

 private:
  ComplexVector amplitudes_;
};

/// Hermitian, positive semidefinite, unit-trace matrix. The constructor checks
/// every invariant and throws InvariantViolation on failure.
class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix matrix);

  static DensityMatrix from_pure(const PureState& psi);
  static DensityMatrix maximally_mixed(int dim);

  /// Hermitises and renormalises a numerically produced matrix before the
  /// invariant check. Use only on outputs of physical maps, never to hide
  /// genuine invariant failures: negative eigenvalues still throw.
  static DensityMatrix from_numerical(ComplexMatrix matrix);

  int dim() const { return static_cast<int>(matrix_.rows()); }
  const ComplexMatrix& matrix() const { return matrix_; }
  double purity() const;

 private:
  ComplexMatrix matrix_;
};

// ---------------------------------------------------------------------------
// Matrix helpers

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

/// Kronecker product of a list of factors, leftmost factor most significant.
ComplexMatrix kron_all(std::span<const ComplexMatrix> factors);

/// max_ij |m - m^dag|_ij
double hermiticity_error(const ComplexMatrix& m);

/// max_ij |u^dag u - I|_ij
double unitarity_error(const ComplexMatrix& u);

/// Smallest eigenvalue of the Hermitian part of `m`.
double min_eigenvalue(const ComplexMatrix& m);

bool all_finite(const ComplexMatrix& m);

/// Reduced matrix over the subsystems listed in `keep` (in their original
/// order). `subsystem_dims` must multiply to the matrix dimension.
ComplexMatrix partial_trace(const ComplexMatrix& rho, std::span<const int> subsystem_dims,
                            std::span<const int> keep);

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> subsystem_dims,
                            std::span<const int> keep);

/// <psi|rho|psi>; values within tol::kSpectral outside [0,1] are clipped.
double state_fidelity(const DensityMatrix& rho, const PureState& psi);

/// Half the trace norm of the difference.
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

// ---------------------------------------------------------------------------
// Qubit helpers

enum class Pauli { I = 0, X = 1, Y = 2, Z = 3 };

const Matrix2c& pauli(Pauli p);

/// {I, X, Y, Z} in that order; the operator basis of the process matrix.
const std::array<Matrix2c, 4>& pauli_basis();

/// r_i = tr(sigma_i rho). Requires a qubit.
Vector3 bloch_vector(const DensityMatrix& rho);

/// (I + r.sigma)/2; requires |r| <= 1 + tol::kSpectral.
DensityMatrix from_bloch_vector(const Vector3& r);

// ---------------------------------------------------------------------------
// Random generators (test and property support). All are deterministic
// functions of the generator state.

ComplexMatrix random_unitary(int dim, std::mt19937_64& rng);
PureState random_pure_state(int dim, std::mt19937_64& rng);

}  // namespace iontele
