#include <cmath>
#include <numbers>
#include <stdexcept>

#include "iontele/errors.hpp"
#include "protocol_internal.hpp"

namespace iontele::protocol {

FidelityEstimate teleportation_fidelity(const InputStateSpec& input,
                                        const noise::NoiseConfig& noise, EstimationMode mode,
                                        double phase_offset, const ProtocolOptions& options) {
  return std::visit(
      detail::Overloaded{
          [&](const Exact&) {
            const DensityMatrix rho = run_exact(input, phase_offset, noise, options);
            return FidelityEstimate{state_fidelity(rho, input_state(input)), 0.0};
          },
          [&](const Sampled& s) {
            if (s.shots == 0) throw std::invalid_argument("teleportation_fidelity: shots must be > 0");
            const Sequence seq = build_sequence(input, phase_offset, FidelityCheck{}, options);
            const auto records = run_shots(seq, noise, s.seed, s.shots, options, s.workers);
            std::uint64_t bright = 0;
            for (const auto& r : records) bright += r.final_outcome == Outcome::Bright ? 1 : 0;
            const double n = static_cast<double>(s.shots);
            const double p = static_cast<double>(bright) / n;
            return FidelityEstimate{p, std::sqrt(p * (1.0 - p) / n)};
          },
      },
      mode);
}

CalibrationResult calibrate_phase(const noise::NoiseConfig& noise,
                                  const InputStateSpec& reference_input, int grid_points,
                                  const ProtocolOptions& options) {
  using std::numbers::pi;
  if (grid_points < 8) throw std::invalid_argument("calibrate_phase: grid_points must be >= 8");
  const ExactEngine engine(reference_input, noise, options);
  const PureState psi = input_state(reference_input);
  auto fidelity = [&](double phi) { return state_fidelity(engine.output(phi), psi); };

  CalibrationResult out;
  const double step = 2 * pi / grid_points;
  int best = 0;
  for (int k = 0; k < grid_points; ++k) {
    const double phi = k * step;
    out.sweep.emplace_back(phi, fidelity(phi));
    if (out.sweep[k].second > out.sweep[best].second) best = k;
  }
  out.sweep.emplace_back(2 * pi, fidelity(2 * pi));

  // Golden-section refinement on [best - step, best + step].
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = out.sweep[best].first - step;
  double b = out.sweep[best].first + step;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = fidelity(c);
  double fd = fidelity(d);
  while (b - a > 1e-9) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = fidelity(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = fidelity(d);
    }
  }
  double phi = 0.5 * (a + b);
  double f = fidelity(phi);
  if (f < out.sweep[best].second) {
    phi = out.sweep[best].first;
    f = out.sweep[best].second;
  }
  phi = std::fmod(phi, 2 * pi);
  if (phi < 0.0) phi += 2 * pi;
  out.phase_offset = phi;
  out.fidelity = f;
  return out;
}

double measure_and_resend_fidelity(const PureState& psi) {
  if (psi.dim() != 2) throw DimensionError("measure_and_resend_fidelity: qubit state required");
  const double p0 = std::norm(psi.amplitudes()[0]);
  const double p1 = std::norm(psi.amplitudes()[1]);
  return p0 * p0 + p1 * p1;
}

double classical_baseline() {
  double sum = 0.0;
  for (const auto& in : canonical_inputs()) sum += measure_and_resend_fidelity(input_state(in));
  return sum / static_cast<double>(canonical_inputs().size());
}

}  // namespace iontele::protocol
