#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "iontele/protocol.hpp"

namespace iontele::protocol {

namespace {

using std::numbers::pi;
using trap::BlueSideband;
using trap::Carrier;
using trap::Hide;
using trap::Wait;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

class SequenceBuilder {
 public:
  void marker(int id, std::string action, std::string comment) {
    push(id, Marker{std::move(action)}, std::move(comment), StepRole::Initialization);
  }
  void pulse(int id, trap::Pulse p, std::string comment, StepRole role, bool offset = false) {
    push(id, std::move(p), std::move(comment), role, offset);
  }
  void readout(int id, int ion, ReadoutChannel channel, int record, std::string comment,
               StepRole role) {
    push(id, Readout{trap::Detect{ion}, channel, record}, std::move(comment), role);
  }
  void conditional(int id, int record, trap::Pulse p, std::string comment) {
    push(id, ConditionalPulse{record, Outcome::Dark, std::move(p)}, std::move(comment),
         StepRole::Reconstruction, true);
  }
  Sequence take() { return std::move(steps_); }

 private:
  void push(int id, Action action, std::string comment, StepRole role, bool offset = false) {
    steps_.push_back({id, std::move(action), std::move(comment), role, offset});
  }
  Sequence steps_;
};

}  // namespace

const std::array<InputStateSpec, 6>& canonical_inputs() {
  static const std::array<InputStateSpec, 6> inputs{{
      {0.0, 0.0, "psi1"},
      {pi, 0.0, "psi2"},
      {pi / 2, pi, "psi3"},
      {pi / 2, pi / 2, "psi4"},
      {pi / 2, 0.0, "psi5"},
      {pi / 2, 3 * pi / 2, "psi6"},
  }};
  return inputs;
}

PureState input_state(const InputStateSpec& spec) {
  const Matrix2c r = trap::rotation(spec.theta_chi, spec.phi_chi);
  return PureState::normalized(r.col(0));
}

const char* basis_name(Basis b) {
  switch (b) {
    case Basis::X:
      return "X";
    case Basis::Y:
      return "Y";
    case Basis::Z:
      break;
  }
  return "Z";
}

Sequence build_sequence(const InputStateSpec& input, double phase_offset, Mode mode,
                        const ProtocolOptions& options) {
  constexpr int src = kSourceIon;
  constexpr int anc = kAncillaIon;
  constexpr int tgt = kTargetIon;
  const double phi = phase_offset;
  SequenceBuilder b;

  b.marker(1, "Light at 397 nm", "Doppler cooling");
  b.marker(2, "Light at 729 nm", "Sideband cooling to n=0");
  b.marker(3, "Light at 397 nm", "Optical pumping into S");

  b.pulse(4, BlueSideband{tgt, pi / 2, 3 * pi / 2}, "Entangle target with the motional mode",
          StepRole::BellPreparation);
  b.pulse(5, Carrier{anc, pi, 3 * pi / 2}, "Flip ancilla before entangling",
          StepRole::BellPreparation);
  b.pulse(6, BlueSideband{anc, pi, pi / 2}, "Map motion onto ancilla: Bell pair ancilla-target",
          StepRole::BellPreparation);
  b.pulse(7, Wait{options.standby_us}, "Stand-by", StepRole::Standby);
  b.pulse(8, Hide{tgt, pi, 0.0}, "Hide target", StepRole::Standby);

  b.pulse(9, Carrier{src, input.theta_chi, input.phi_chi}, "Prepare source in the input state",
          StepRole::InputPreparation);

  b.pulse(10, BlueSideband{anc, pi, 3 * pi / 2}, "Swap ancilla onto the motional mode",
          StepRole::BellRotation);
  b.pulse(11, BlueSideband{src, pi / std::numbers::sqrt2, pi / 2}, "Phase gate, composite pulse 1",
          StepRole::BellRotation);
  b.pulse(12, BlueSideband{src, pi, 0.0}, "Phase gate, composite pulse 2", StepRole::BellRotation);
  b.pulse(13, BlueSideband{src, pi / std::numbers::sqrt2, pi / 2}, "Phase gate, composite pulse 3",
          StepRole::BellRotation);
  b.pulse(14, BlueSideband{src, pi, 0.0}, "Phase gate, composite pulse 4", StepRole::BellRotation);
  b.pulse(15, Carrier{src, pi, pi / 2}, "Spin echo on source", StepRole::BellRotation);
  if (options.spin_echo) {
    b.pulse(16, Hide{tgt, pi, pi}, "Unhide target for its spin echo", StepRole::BellRotation);
    b.pulse(17, Carrier{tgt, pi, pi / 2}, "Spin echo on target", StepRole::BellRotation);
    b.pulse(18, Hide{tgt, pi, 0.0}, "Hide target again", StepRole::BellRotation);
  }
  b.pulse(19, BlueSideband{anc, pi, pi / 2}, "Swap the motional mode back onto ancilla",
          StepRole::BellRotation);
  b.pulse(20, Carrier{src, pi / 2, 3 * pi / 2}, "Rotate source towards the Bell basis",
          StepRole::BellRotation);
  b.pulse(21, Carrier{anc, pi / 2, pi / 2}, "Complete the Bell-basis rotation",
          StepRole::BellRotation);

  b.pulse(22, Hide{anc, pi, 0.0}, "Hide ancilla", StepRole::Readout);
  b.readout(23, src, ReadoutChannel::Pmt, 1, "PMT detection #1: source", StepRole::Readout);
  b.pulse(24, Hide{src, pi, 0.0}, "Hide source", StepRole::Readout);
  b.pulse(25, Hide{anc, pi, pi}, "Unhide ancilla", StepRole::Readout);
  b.readout(26, anc, ReadoutChannel::Pmt, 2, "PMT detection #2: ancilla", StepRole::Readout);
  b.pulse(27, Hide{anc, pi, 0.0}, "Hide ancilla", StepRole::Readout);

  b.pulse(28, Wait{options.rephase_wait_us}, "Rephase wait (second half of the echo)",
          StepRole::Rephase);
  b.pulse(29, Hide{tgt, pi, pi}, "Unhide target", StepRole::Rephase);
  if (!options.spin_echo) {
    // Same ideal unitary as rows 16-18, applied without a refocusing window.
    b.pulse(29, Carrier{tgt, pi, pi / 2}, "Target echo rotation without refocusing",
            StepRole::Rephase);
  }

  b.pulse(30, Carrier{tgt, pi / 2, 3 * pi / 2 + phi}, "Basis change deferred from the Bell rotation",
          StepRole::Reconstruction, true);
  if (options.reconstruction) {
    b.conditional(31, 1, Carrier{tgt, pi, phi}, "Conditional on PMT #1 Dark (with 32: Z)");
    b.conditional(32, 1, Carrier{tgt, pi, pi / 2 + phi}, "Conditional on PMT #1 Dark (with 31: Z)");
    b.conditional(33, 2, Carrier{tgt, pi, phi}, "Conditional on PMT #2 Dark: X");
  }

  std::visit(Overloaded{
                 [&](const FidelityCheck&) {
                   b.pulse(34, Carrier{tgt, input.theta_chi, input.phi_chi + pi + phi},
                           "Undo the input preparation", StepRole::Analysis, true);
                 },
                 [&](const Tomography& t) {
                   // Bright <=> +1 eigenstate of the measured Pauli.
                   if (t.basis == Basis::X) {
                     b.pulse(34, Carrier{tgt, pi / 2, pi / 2 + phi}, "Analysis rotation: X basis",
                             StepRole::Analysis, true);
                   } else if (t.basis == Basis::Y) {
                     b.pulse(34, Carrier{tgt, pi / 2, phi}, "Analysis rotation: Y basis",
                             StepRole::Analysis, true);
                   }
                 },
             },
             mode);

  b.readout(35, tgt, ReadoutChannel::Camera, 0, "Read out target", StepRole::FinalReadout);
  return b.take();
}

void validate_sequence(const Sequence& sequence, const ProtocolOptions& options) {
  const trap::RegisterDims dims{kNumIons, options.fock_cutoff};
  int last_id = 0;
  std::array<bool, 3> filled{false, false, false};
  for (const auto& step : sequence) {
    if (step.step_id < last_id) {
      throw std::invalid_argument("step ids must not decrease (step " +
                                  std::to_string(step.step_id) + ")");
    }
    last_id = step.step_id;
    std::visit(Overloaded{
                   [](const Marker&) {},
                   [&](const trap::Pulse& p) { trap::validate_pulse(p, dims); },
                   [&](const Readout& r) {
                     trap::validate_pulse(r.detect, dims);
                     if (r.record < 0 || r.record > 2) {
                       throw std::invalid_argument("readout record must be 0, 1 or 2");
                     }
                     if (r.record > 0) filled[r.record] = true;
                   },
                   [&](const ConditionalPulse& c) {
                     if (c.record < 1 || c.record > 2 || !filled[c.record]) {
                       throw std::invalid_argument("conditional pulse at step " +
                                                   std::to_string(step.step_id) +
                                                   " references a record not yet filled");
                     }
                     trap::validate_pulse(c.pulse, dims);
                   },
               },
               step.action);
  }
}

// ---------------------------------------------------------------------------
// Listing

namespace {

std::string format_angle(double a) {
  constexpr double eps = 1e-12;
  if (std::abs(a) < eps) return "0";
  for (int den : {1, 2, 4}) {
    const double k = a / pi * den;
    const double kr = std::round(k);
    if (std::abs(k - kr) < eps) {
      const long n = std::lround(kr);
      std::string num = n == 1 ? "pi" : (n == -1 ? "-pi" : std::to_string(n) + "pi");
      return den == 1 ? num : num + "/" + std::to_string(den);
    }
  }
  if (std::abs(a - pi / std::numbers::sqrt2) < eps) return "pi/sqrt2";
  std::ostringstream os;
  os << std::setprecision(6) << a;
  return os.str();
}

std::string format_pulse(const trap::Pulse& p) {
  auto rot = [](const char* kind, int ion, double theta, double phi) {
    return std::string("R") + kind + "_" + std::to_string(ion + 1) + "(" + format_angle(theta) +
           ", " + format_angle(phi) + ")";
  };
  return std::visit(Overloaded{
                        [&](const Carrier& c) { return rot("C", c.ion, c.theta, c.phi); },
                        [&](const BlueSideband& c) { return rot("+", c.ion, c.theta, c.phi); },
                        [&](const Hide& c) { return rot("H", c.ion, c.theta, c.phi); },
                        [](const Wait& w) {
                          std::ostringstream os;
                          os << "Wait " << w.duration_us << " us";
                          return os.str();
                        },
                        [](const trap::Detect& d) {
                          return "Detect ion " + std::to_string(d.ion + 1);
                        },
                    },
                    p);
}

}  // namespace

std::string format_sequence(const Sequence& sequence) {
  std::ostringstream os;
  for (const auto& step : sequence) {
    const std::string action = std::visit(
        Overloaded{
            [](const Marker& m) { return m.action; },
            [](const trap::Pulse& p) { return format_pulse(p); },
            [](const Readout& r) {
              return std::string(r.channel == ReadoutChannel::Pmt ? "PMT" : "Camera") +
                     " readout ion " + std::to_string(r.detect.ion + 1) +
                     (r.record > 0 ? " -> record " + std::to_string(r.record) : "");
            },
            [](const ConditionalPulse& c) {
              return "if PMT #" + std::to_string(c.record) + " " +
                     (c.when == Outcome::Dark ? "Dark" : "Bright") + ": " + format_pulse(c.pulse);
            },
        },
        step.action);
    os << std::setw(3) << step.step_id << "  " << std::left << std::setw(36) << action
       << std::right << "  " << step.comment << '\n';
  }
  return os.str();
}

const char* branch_name(BranchLabel b) {
  switch (b) {
    case BranchLabel::SD:
      return "SD";
    case BranchLabel::DS:
      return "DS";
    case BranchLabel::DD:
      return "DD";
    case BranchLabel::SS:
      break;
  }
  return "SS";
}

BranchLabel branch_of(Outcome pmt1, Outcome pmt2) {
  const int d1 = pmt1 == Outcome::Dark ? 1 : 0;
  const int d2 = pmt2 == Outcome::Dark ? 1 : 0;
  return static_cast<BranchLabel>(2 * d1 + d2);
}

}  // namespace iontele::protocol
