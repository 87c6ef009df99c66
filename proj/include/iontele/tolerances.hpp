#pragma once

namespace iontele::tol {

// Structural checks: hermiticity, unitarity, normalisation of pure states.
inline constexpr double kStructural = 1e-12;
// Spectral checks: traces, smallest eigenvalues.
inline constexpr double kSpectral = 1e-10;
// Trace preservation of reconstructed process matrices.
inline constexpr double kTracePreservation = 1e-8;
// Maximum population tolerated in the top Fock level.
inline constexpr double kDefaultLeakageBudget = 1e-9;
// Residual hide-level / motional population tolerated at the end of an exact run.
inline constexpr double kResidualPopulation = 1e-8;

}  // namespace iontele::tol
