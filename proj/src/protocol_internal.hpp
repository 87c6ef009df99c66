#pragma once

// Helpers shared by the shot runner and the exact engine.

#include <vector>

#include "iontele/ion_trap.hpp"
#include "iontele/noise_model.hpp"
#include "iontele/protocol.hpp"

namespace iontele::protocol::detail {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

/// PMT light is collected from the whole string: the signal is Dark only
/// when no ion is in S. Hidden ions therefore must not carry S population.
std::vector<bool> collective_dark_mask(const trap::RegisterDims& dims);

/// Pulse with its phase moved by `shift` (Carrier/BlueSideband/Hide only).
trap::Pulse shift_phase(trap::Pulse pulse, double shift);

inline bool is_coherent(const trap::Pulse& p) {
  return !std::holds_alternative<trap::Wait>(p) && !std::holds_alternative<trap::Detect>(p);
}

}  // namespace iontele::protocol::detail
