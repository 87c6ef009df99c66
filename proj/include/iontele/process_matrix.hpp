#pragma once

#include <cstdint>
#include <span>

#include "iontele/quantum_core.hpp"

namespace iontele {

/// Single-qubit channel in the {I, X, Y, Z} operator basis:
///   E(rho) = sum_mn chi_mn A_m rho A_n^dag.
/// Hermitian, positive semidefinite and trace preserving; all three are
/// checked on construction.
class ProcessMatrix {
 public:
  explicit ProcessMatrix(const Matrix4c& chi);

  static ProcessMatrix identity();
  static ProcessMatrix from_kraus(std::span<const Matrix2c> kraus);

  const Matrix4c& chi() const { return chi_; }

  Matrix2c apply(const Matrix2c& rho) const;

  /// max entry of |sum_mn chi_mn A_n^dag A_m - I|
  double trace_preservation_error() const;

 private:
  Matrix4c chi_;
};

/// sum_mn chi_mn A_n^dag A_m for an arbitrary (not necessarily valid) chi.
Matrix2c completeness_operator(const Matrix4c& chi);

/// Random CPTP qubit channel: a Haar-random isometry into a four-dimensional
/// environment, traced out. Bit-identical for equal seeds.
ProcessMatrix random_cptp_qubit_channel(std::uint64_t seed);

}  // namespace iontele
