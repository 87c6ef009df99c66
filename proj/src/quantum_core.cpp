#include "iontele/quantum_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "iontele/errors.hpp"
#include "iontele/tolerances.hpp"

namespace iontele {

namespace {

void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionError(std::string(what) + ": matrix must be square and non-empty");
  }
}

}  // namespace

PureState::PureState(ComplexVector amplitudes) : amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() == 0) throw DimensionError("PureState: empty amplitude vector");
  if (!amplitudes_.allFinite()) throw InvariantViolation("PureState: non-finite amplitude");
  const double norm = amplitudes_.norm();
  if (std::abs(norm - 1.0) > tol::kStructural) {
    throw InvariantViolation("PureState: norm " + std::to_string(norm) + " is not 1");
  }
}

PureState PureState::normalized(ComplexVector amplitudes) {
  const double norm = amplitudes.norm();
  if (!(norm > 0.0)) throw InvariantViolation("PureState: cannot normalise a zero vector");
  amplitudes /= norm;
  return PureState(std::move(amplitudes));
}

DensityMatrix::DensityMatrix(ComplexMatrix matrix) : matrix_(std::move(matrix)) {
  require_square(matrix_, "DensityMatrix");
  if (!all_finite(matrix_)) throw InvariantViolation("DensityMatrix: non-finite entry");
  if (const double h = hermiticity_error(matrix_); h > tol::kStructural) {
    throw InvariantViolation("DensityMatrix: not Hermitian (error " + std::to_string(h) + ")");
  }
  if (const double t = matrix_.trace().real(); std::abs(t - 1.0) > tol::kSpectral) {
    throw InvariantViolation("DensityMatrix: trace " + std::to_string(t) + " is not 1");
  }
  if (const double e = min_eigenvalue(matrix_); e < -tol::kSpectral) {
    throw InvariantViolation("DensityMatrix: negative eigenvalue " + std::to_string(e));
  }
}

DensityMatrix DensityMatrix::from_pure(const PureState& psi) {
  ComplexMatrix rho = psi.amplitudes() * psi.amplitudes().adjoint();
  return from_numerical(std::move(rho));
}

DensityMatrix DensityMatrix::maximally_mixed(int dim) {
  if (dim <= 0) throw DimensionError("maximally_mixed: dimension must be positive");
  return DensityMatrix(ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::from_numerical(ComplexMatrix matrix) {
  require_square(matrix, "DensityMatrix");
  ComplexMatrix herm = 0.5 * (matrix + matrix.adjoint());
  const double t = herm.trace().real();
  if (!(t > 0.0)) throw InvariantViolation("DensityMatrix: non-positive trace");
  herm /= t;
  return DensityMatrix(std::move(herm));
}

double DensityMatrix::purity() const { return (matrix_ * matrix_).trace().real(); }

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

ComplexMatrix kron_all(std::span<const ComplexMatrix> factors) {
  ComplexMatrix out = ComplexMatrix::Identity(1, 1);
  for (const auto& f : factors) out = kron(out, f);
  return out;
}

double hermiticity_error(const ComplexMatrix& m) {
  require_square(m, "hermiticity_error");
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double unitarity_error(const ComplexMatrix& u) {
  require_square(u, "unitarity_error");
  return (u.adjoint() * u - ComplexMatrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const ComplexMatrix& m) {
  require_square(m, "min_eigenvalue");
  const ComplexMatrix herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(herm, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool all_finite(const ComplexMatrix& m) { return m.allFinite(); }

ComplexMatrix partial_trace(const ComplexMatrix& rho, std::span<const int> subsystem_dims,
                            std::span<const int> keep) {
  require_square(rho, "partial_trace");
  const int n_sub = static_cast<int>(subsystem_dims.size());
  long total = 1;
  for (int d : subsystem_dims) {
    if (d <= 0) throw DimensionError("partial_trace: subsystem dimensions must be positive");
    total *= d;
  }
  if (total != rho.rows()) {
    throw DimensionError("partial_trace: subsystem dimensions multiply to " +
                         std::to_string(total) + ", matrix has dimension " +
                         std::to_string(rho.rows()));
  }
  if (keep.empty()) throw DimensionError("partial_trace: keep set is empty");

  std::vector<bool> kept(n_sub, false);
  for (int k : keep) {
    if (k < 0 || k >= n_sub || kept[k]) throw DimensionError("partial_trace: invalid keep index");
    kept[k] = true;
  }
  std::vector<int> kept_list;
  std::vector<int> traced_list;
  for (int s = 0; s < n_sub; ++s) (kept[s] ? kept_list : traced_list).push_back(s);

  // Row-major strides: subsystem 0 is the most significant digit.
  std::vector<long> stride(n_sub, 1);
  for (int s = n_sub - 2; s >= 0; --s) stride[s] = stride[s + 1] * subsystem_dims[s + 1];

  auto offsets_of = [&](const std::vector<int>& subs) {
    std::vector<long> offsets{0};
    for (int s : subs) {
      std::vector<long> next;
      next.reserve(offsets.size() * subsystem_dims[s]);
      for (long o : offsets) {
        for (int v = 0; v < subsystem_dims[s]; ++v) next.push_back(o + v * stride[s]);
      }
      offsets = std::move(next);
    }
    return offsets;
  };
  const std::vector<long> kept_off = offsets_of(kept_list);
  const std::vector<long> traced_off = offsets_of(traced_list);

  const auto dk = static_cast<Eigen::Index>(kept_off.size());
  ComplexMatrix out = ComplexMatrix::Zero(dk, dk);
  for (Eigen::Index i = 0; i < dk; ++i) {
    for (Eigen::Index j = 0; j < dk; ++j) {
      Complex acc{0.0, 0.0};
      for (long t : traced_off) acc += rho(kept_off[i] + t, kept_off[j] + t);
      out(i, j) = acc;
    }
  }
  return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> subsystem_dims,
                            std::span<const int> keep) {
  return DensityMatrix::from_numerical(partial_trace(rho.matrix(), subsystem_dims, keep));
}

double state_fidelity(const DensityMatrix& rho, const PureState& psi) {
  if (rho.dim() != psi.dim()) throw DimensionError("state_fidelity: dimension mismatch");
  const double f = psi.amplitudes().dot(rho.matrix() * psi.amplitudes()).real();
  if (f < 0.0 && f > -tol::kSpectral) return 0.0;
  if (f > 1.0 && f < 1.0 + tol::kSpectral) return 1.0;
  return f;
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw DimensionError("trace_distance: dimension mismatch");
  const ComplexMatrix diff = a.matrix() - b.matrix();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(0.5 * (diff + diff.adjoint()),
                                                      Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

const std::array<Matrix2c, 4>& pauli_basis() {
  static const std::array<Matrix2c, 4> basis = [] {
    std::array<Matrix2c, 4> b;
    b[0] << 1, 0, 0, 1;
    b[1] << 0, 1, 1, 0;
    b[2] << 0, -kI, kI, 0;
    b[3] << 1, 0, 0, -1;
    return b;
  }();
  return basis;
}

const Matrix2c& pauli(Pauli p) { return pauli_basis()[static_cast<int>(p)]; }

Vector3 bloch_vector(const DensityMatrix& rho) {
  if (rho.dim() != 2) throw DimensionError("bloch_vector: qubit density matrix required");
  const auto& m = rho.matrix();
  Vector3 r;
  for (int i = 0; i < 3; ++i) r[i] = (pauli_basis()[i + 1] * m).trace().real();
  return r;
}

DensityMatrix from_bloch_vector(const Vector3& r) {
  if (r.norm() > 1.0 + tol::kSpectral) {
    throw InvariantViolation("from_bloch_vector: |r| exceeds 1");
  }
  Matrix2c rho = pauli_basis()[0];
  for (int i = 0; i < 3; ++i) rho += r[i] * pauli_basis()[i + 1];
  return DensityMatrix(ComplexMatrix(0.5 * rho));
}

ComplexMatrix random_unitary(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix g(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) g(i, j) = Complex(normal(rng), normal(rng));
  }
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix column phases so the distribution is Haar.
  for (int j = 0; j < dim; ++j) {
    const Complex d = r(j, j);
    if (std::abs(d) > 0.0) q.col(j) *= d / std::abs(d);
  }
  return q;
}

PureState random_pure_state(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexVector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = Complex(normal(rng), normal(rng));
  return PureState::normalized(std::move(v));
}

}  // namespace iontele
