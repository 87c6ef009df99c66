#include "iontele/process_matrix.hpp"

#include <string>
#include <vector>

#include "iontele/errors.hpp"
#include "iontele/tolerances.hpp"

namespace iontele {

ProcessMatrix::ProcessMatrix(const Matrix4c& chi) : chi_(chi) {
  if (!chi_.allFinite()) throw InvariantViolation("ProcessMatrix: non-finite entry");
  if (const double h = hermiticity_error(chi_); h > tol::kSpectral) {
    throw InvariantViolation("ProcessMatrix: not Hermitian (error " + std::to_string(h) + ")");
  }
  if (const double e = min_eigenvalue(chi_); e < -tol::kSpectral) {
    throw InvariantViolation("ProcessMatrix: negative eigenvalue " + std::to_string(e));
  }
  if (const double t = trace_preservation_error(); t > tol::kTracePreservation) {
    throw InvariantViolation("ProcessMatrix: not trace preserving (error " + std::to_string(t) +
                             ")");
  }
}

ProcessMatrix ProcessMatrix::identity() {
  Matrix4c chi = Matrix4c::Zero();
  chi(0, 0) = 1.0;
  return ProcessMatrix(chi);
}

ProcessMatrix ProcessMatrix::from_kraus(std::span<const Matrix2c> kraus) {
  const auto& basis = pauli_basis();
  Matrix4c chi = Matrix4c::Zero();
  for (const auto& k : kraus) {
    Eigen::Vector4cd c;
    for (int m = 0; m < 4; ++m) c[m] = 0.5 * (basis[m].adjoint() * k).trace();
    chi += c * c.adjoint();
  }
  return ProcessMatrix(chi);
}

Matrix2c ProcessMatrix::apply(const Matrix2c& rho) const {
  const auto& basis = pauli_basis();
  Matrix2c out = Matrix2c::Zero();
  for (int m = 0; m < 4; ++m) {
    const Matrix2c left = basis[m] * rho;
    for (int n = 0; n < 4; ++n) {
      if (chi_(m, n) != Complex{}) out += chi_(m, n) * left * basis[n].adjoint();
    }
  }
  return out;
}

double ProcessMatrix::trace_preservation_error() const {
  return (completeness_operator(chi_) - Matrix2c::Identity()).cwiseAbs().maxCoeff();
}

Matrix2c completeness_operator(const Matrix4c& chi) {
  const auto& basis = pauli_basis();
  Matrix2c out = Matrix2c::Zero();
  for (int m = 0; m < 4; ++m) {
    for (int n = 0; n < 4; ++n) out += chi(m, n) * basis[n].adjoint() * basis[m];
  }
  return out;
}

ProcessMatrix random_cptp_qubit_channel(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // First two columns of a Haar unitary on C^2 (x) C^4 form the isometry.
  const ComplexMatrix u = random_unitary(8, rng);
  std::vector<Matrix2c> kraus(4);
  for (int k = 0; k < 4; ++k) kraus[k] = u.block(2 * k, 0, 2, 2);
  return ProcessMatrix::from_kraus(kraus);
}

}  // namespace iontele
