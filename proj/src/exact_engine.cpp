#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

#include "iontele/errors.hpp"
#include "protocol_internal.hpp"

namespace iontele::protocol {

namespace {

using detail::Overloaded;
using Records = std::array<std::optional<Outcome>, 3>;

struct DetuningNode {
  double weight;
  std::vector<double> detuning_SD;
};

std::vector<DetuningNode> detuning_nodes(const noise::NoiseConfig& noise,
                                         const ProtocolOptions& options) {
  const double s = noise.detuning_sigma_SD;
  const double s0 = noise.static_detuning_SD;
  if (s == 0.0) return {{1.0, std::vector<double>(kNumIons, s0)}};
  if (options.dephasing_nodes < 1) throw std::invalid_argument("dephasing_nodes must be >= 1");

  if (noise.correlated_dephasing) {
    const auto rule = noise::gauss_hermite(options.dephasing_nodes);
    std::vector<DetuningNode> out;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      out.push_back({rule.weights[k], std::vector<double>(kNumIons, s0 + s * rule.nodes[k])});
    }
    return out;
  }
  // A full tensor grid over three ions; fewer nodes per axis keep it tractable.
  const auto rule = noise::gauss_hermite(std::max(3, options.dephasing_nodes / 4));
  const std::size_t m = rule.nodes.size();
  std::vector<DetuningNode> out;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t c = 0; c < m; ++c) {
        out.push_back({rule.weights[a] * rule.weights[b] * rule.weights[c],
                       {s0 + s * rule.nodes[a], s0 + s * rule.nodes[b], s0 + s * rule.nodes[c]}});
      }
    }
  }
  return out;
}

/// Coherent pulse followed by its pulse-area and depolarizing channels.
class PulseChannel {
 public:
  PulseChannel(const noise::NoiseConfig& noise, const ProtocolOptions& options)
      : noise_(noise) {
    if (noise.amplitude_error_sigma > 0.0) {
      if (options.amplitude_nodes < 1) throw std::invalid_argument("amplitude_nodes must be >= 1");
      amplitude_ = noise::gauss_hermite(options.amplitude_nodes);
    }
  }

  bool mixes() const {
    return noise_.amplitude_error_sigma > 0.0 || noise_.depolarizing_per_pulse > 0.0;
  }

  void apply(trap::TrapRegister& reg, const trap::Pulse& pulse) const {
    const auto& dims = reg.dims();
    if (noise_.amplitude_error_sigma > 0.0) {
      if (reg.is_pure()) reg = reg.to_density();
      trap::TrapRegister mixed = reg;
      mixed.scale(0.0);
      for (std::size_t k = 0; k < amplitude_.nodes.size(); ++k) {
        noise::ShotNoise factor;
        factor.amplitude_factors = {1.0 + noise_.amplitude_error_sigma * amplitude_.nodes[k]};
        trap::TrapRegister term = reg;
        term.apply(trap::pulse_local(dims, noise::perturb_pulse(pulse, factor, 0)));
        mixed.accumulate(term, amplitude_.weights[k]);
      }
      reg = std::move(mixed);
    } else {
      reg.apply(trap::pulse_local(dims, pulse));
    }
    reg.check_leakage();
    if (noise_.depolarizing_per_pulse > 0.0) {
      reg = noise::apply_depolarizing(std::move(reg), *trap::addressed_ion(pulse),
                                      noise_.depolarizing_per_pulse);
    }
  }

 private:
  const noise::NoiseConfig& noise_;
  noise::QuadratureRule amplitude_;
};

struct FullBranch {
  double weight;
  Records records;
  trap::TrapRegister reg;
};

trap::Pulse retarget(trap::Pulse pulse, int ion) {
  std::visit(Overloaded{
                 [](trap::Wait&) {},
                 [&](auto& p) { p.ion = ion; },
             },
             pulse);
  return pulse;
}

bool is_analysis(const SequenceStep& step) {
  return step.role == StepRole::Analysis || step.role == StepRole::FinalReadout;
}

/// Pulse-area and depolarizing errors can strand population in H or in
/// excited phonon states; coherent runs must not.
bool gate_noise(const noise::NoiseConfig& n) {
  return n.amplitude_error_sigma > 0.0 || n.depolarizing_per_pulse > 0.0;
}

double apply_detection_error(double p_bright, double eps) {
  return p_bright * (1.0 - eps) + (1.0 - p_bright) * eps;
}

}  // namespace

ExactEngine::ExactEngine(const InputStateSpec& input, const noise::NoiseConfig& noise,
                         const ProtocolOptions& options)
    : ExactEngine(build_sequence(input, 0.0, FidelityCheck{}, options), noise, options, 0.0) {}

ExactEngine::ExactEngine(const Sequence& sequence, const noise::NoiseConfig& noise,
                         const ProtocolOptions& options, double built_offset)
    : built_offset_(built_offset), noise_(noise), options_(options) {
  noise_.validate();
  validate_sequence(sequence, options_);
  set_suffix(sequence);
  const Sequence prefix(sequence.begin(), sequence.end() - static_cast<long>(suffix_template_.size()));
  run_prefix(prefix);

  const auto probe = replay_suffix(built_offset_, false);
  double total = 0.0;
  double hidden = 0.0;
  for (const auto& b : probe) {
    total += b.weight * b.target_state.trace().real();
    hidden += b.weight * b.target_state(2, 2).real();
  }
  diagnostics_.residual_hide_population = hidden / total;
}

void ExactEngine::set_suffix(const Sequence& sequence) {
  const auto split = std::find_if(sequence.begin(), sequence.end(),
                                  [](const SequenceStep& s) { return s.uses_phase_offset; });
  if (split == sequence.end()) {
    throw std::invalid_argument("ExactEngine: sequence has no phase-offset step");
  }
  suffix_template_.assign(split, sequence.end());
  prefix_ids_.clear();
  for (auto it = sequence.begin(); it != split; ++it) prefix_ids_.push_back(it->step_id);
  for (const auto& step : suffix_template_) {
    std::visit(Overloaded{
                   [](const Marker&) {},
                   [](const trap::Pulse& p) {
                     if (std::holds_alternative<trap::BlueSideband>(p) ||
                         std::holds_alternative<trap::Detect>(p) ||
                         (detail::is_coherent(p) && *trap::addressed_ion(p) != kTargetIon)) {
                       throw std::invalid_argument(
                           "ExactEngine: steps after the reconstruction start may only drive "
                           "carrier or hide transitions of the target ion");
                     }
                   },
                   [](const ConditionalPulse& c) {
                     if (!std::holds_alternative<trap::Carrier>(c.pulse) ||
                         *trap::addressed_ion(c.pulse) != kTargetIon) {
                       throw std::invalid_argument(
                           "ExactEngine: conditional pulses must be target carriers");
                     }
                   },
                   [](const Readout& r) {
                     if (r.channel != ReadoutChannel::Camera || r.detect.ion != kTargetIon) {
                       throw std::invalid_argument(
                           "ExactEngine: only the final target readout may follow "
                           "the reconstruction start");
                     }
                   },
               },
               step.action);
  }
}

ExactEngine ExactEngine::with_suffix_from(const Sequence& sequence) const {
  validate_sequence(sequence, options_);
  ExactEngine out = *this;
  out.set_suffix(sequence);
  if (out.prefix_ids_ != prefix_ids_) {
    throw std::invalid_argument("with_suffix_from: sequence prefix differs from the engine's");
  }
  return out;
}

void ExactEngine::run_prefix(const Sequence& prefix) {
  const PulseChannel channel(noise_, options_);
  const auto& durations = noise_.durations;
  double motional = 0.0;
  double norm = 0.0;

  for (const auto& node : detuning_nodes(noise_, options_)) {
    const noise::ShotNoise detuning = noise::fixed_detuning(noise_, node.detuning_SD, 0);
    auto init = trap::TrapRegister::initialize(kNumIons, options_.fock_cutoff,
                                               options_.leakage_budget);
    if (channel.mixes() || noise_.detection_error > 0.0) init = init.to_density();
    std::vector<FullBranch> branches{{node.weight, Records{}, std::move(init)}};

    auto accrue = [&](double us) {
      for (auto& b : branches) b.reg = noise::accrue_phase(std::move(b.reg), us, detuning);
    };

    for (const auto& step : prefix) {
      std::visit(
          Overloaded{
              [](const Marker&) {},
              [&](const trap::Pulse& p) {
                if (const auto* w = std::get_if<trap::Wait>(&p)) {
                  accrue(w->duration_us);
                  return;
                }
                if (!detail::is_coherent(p)) {
                  throw std::invalid_argument("ExactEngine: bare Detect steps are not supported");
                }
                for (auto& b : branches) channel.apply(b.reg, p);
                accrue(noise::pulse_duration(p, durations));
              },
              [&](const ConditionalPulse& c) {
                for (auto& b : branches) {
                  if (b.records.at(c.record) == c.when) channel.apply(b.reg, c.pulse);
                }
                accrue(noise::pulse_duration(c.pulse, durations));
              },
              [&](const Readout& r) {
                if (r.channel != ReadoutChannel::Pmt) {
                  throw std::invalid_argument(
                      "ExactEngine: camera readout before the reconstruction phase");
                }
                const double eps = noise_.detection_error;
                std::vector<bool> dark_mask = detail::collective_dark_mask(branches[0].reg.dims());
                std::vector<bool> bright_mask = dark_mask;
                bright_mask.flip();
                std::vector<FullBranch> next;
                for (auto& b : branches) {
                  for (Outcome truth : {Outcome::Bright, Outcome::Dark}) {
                    trap::TrapRegister reg = b.reg;
                    reg.project(truth == Outcome::Dark ? dark_mask : bright_mask);
                    if (!(reg.trace() > 1e-300)) continue;
                    Records rec = b.records;
                    if (r.record > 0) rec.at(r.record) = truth;
                    if (eps > 0.0 && r.record > 0) {
                      Records flipped = rec;
                      flipped.at(r.record) = trap::flip(truth);
                      next.push_back({b.weight * eps, flipped, reg});
                      next.push_back({b.weight * (1.0 - eps), rec, std::move(reg)});
                    } else {
                      next.push_back({b.weight, rec, std::move(reg)});
                    }
                  }
                }
                // Density branches with the same reported records merge.
                if (!next.empty() && !next[0].reg.is_pure()) {
                  std::map<Records, std::size_t> index;
                  std::vector<FullBranch> merged;
                  for (auto& b : next) {
                    const auto [it, fresh] = index.try_emplace(b.records, merged.size());
                    if (fresh) {
                      b.reg.scale(b.weight / node.weight);
                      b.weight = node.weight;
                      merged.push_back(std::move(b));
                    } else {
                      merged[it->second].reg.accumulate(b.reg, b.weight / node.weight);
                    }
                  }
                  next = std::move(merged);
                }
                branches = std::move(next);
                accrue(durations.detection_us);
              },
          },
          step.action);
    }

    const std::vector<int> sub = branches[0].reg.dims().subsystem_dims();
    const std::vector<int> keep_target{kTargetIon};
    const std::vector<int> keep_motion{kNumIons};
    for (auto& b : branches) {
      const ComplexMatrix rho = b.reg.density_matrix();
      ComplexMatrix motion = partial_trace(rho, sub, keep_motion);
      motional += b.weight * (motion.trace().real() - motion(0, 0).real());
      norm += b.weight * rho.trace().real();
      diagnostics_.max_top_fock_population =
          std::max(diagnostics_.max_top_fock_population, b.reg.max_top_fock_population());
      branches_.push_back({b.weight, b.records, partial_trace(rho, sub, keep_target),
                           node.detuning_SD[kTargetIon],
                           (1.0 + noise_.dephasing_ratio_H) * node.detuning_SD[kTargetIon]});
    }
  }
  diagnostics_.residual_motional_population = motional / norm;
  // Detuning and gate noise legitimately leave phonons behind; without them
  // any remainder is a sequence bug.
  const bool coherent = !gate_noise(noise_) && noise_.detuning_sigma_SD == 0.0 &&
                        noise_.static_detuning_SD == 0.0;
  if (coherent && diagnostics_.residual_motional_population > tol::kResidualPopulation) {
    throw InvariantViolation("motional mode keeps population " +
                             std::to_string(diagnostics_.residual_motional_population) +
                             " after the Bell measurement");
  }
}

std::vector<ExactEngine::ReducedBranch> ExactEngine::replay_suffix(double phase_offset,
                                                                    bool include_analysis) const {
  const PulseChannel channel(noise_, options_);
  const trap::RegisterDims dims{1, 2};
  const double shift = phase_offset - built_offset_;
  ComplexMatrix ground = ComplexMatrix::Zero(2, 2);
  ground(0, 0) = 1.0;
  const std::vector<int> sub = dims.subsystem_dims();
  const std::vector<int> keep{0};

  std::vector<ReducedBranch> out;
  out.reserve(branches_.size());
  for (const auto& b : branches_) {
    auto reg = trap::TrapRegister::from_density(dims, kron(b.target_state, ground),
                                                options_.leakage_budget);
    const noise::ShotNoise detuning{{b.detuning_SD}, {b.detuning_H}, {}};
    auto drive = [&](const trap::Pulse& p, bool offset) {
      trap::Pulse local = retarget(p, 0);
      if (offset) local = detail::shift_phase(local, shift);
      channel.apply(reg, local);
    };
    for (const auto& step : suffix_template_) {
      if (!include_analysis && is_analysis(step)) continue;
      std::visit(Overloaded{
                     [](const Marker&) {},
                     [&](const trap::Pulse& p) {
                       if (detail::is_coherent(p)) {
                         drive(p, step.uses_phase_offset);
                         reg = noise::accrue_phase(std::move(reg),
                                                   noise::pulse_duration(p, noise_.durations),
                                                   detuning);
                       } else if (const auto* w = std::get_if<trap::Wait>(&p)) {
                         reg = noise::accrue_phase(std::move(reg), w->duration_us, detuning);
                       }
                     },
                     [&](const ConditionalPulse& c) {
                       if (b.records.at(c.record) == c.when) drive(c.pulse, step.uses_phase_offset);
                       reg = noise::accrue_phase(
                           std::move(reg), noise::pulse_duration(c.pulse, noise_.durations),
                           detuning);
                     },
                     [](const Readout&) {},
                 },
                 step.action);
    }
    out.push_back({b.weight, b.records, partial_trace(reg.density(), sub, keep), b.detuning_SD,
                   b.detuning_H});
  }
  return out;
}

namespace {

/// Drops the H population and undoes the offset frame on {S, D}.
DensityMatrix to_analysis_frame(const ComplexMatrix& rho3, double phase_offset,
                                bool allow_hidden) {
  const double total = rho3.trace().real();
  if (!(total > 0.0)) throw InvariantViolation("ExactEngine: empty output state");
  const double hidden = rho3(2, 2).real() / total;
  if (!allow_hidden && hidden > tol::kResidualPopulation) {
    throw InvariantViolation("target ion keeps population " + std::to_string(hidden) +
                             " in the hide level after reconstruction");
  }
  ComplexMatrix q = rho3.topLeftCorner(2, 2);
  q /= q.trace().real();
  Matrix2c f = Matrix2c::Identity();
  f(1, 1) = std::exp(-kI * phase_offset);
  return DensityMatrix::from_numerical(f.adjoint() * q * f);
}

}  // namespace

DensityMatrix ExactEngine::output(double phase_offset) const {
  ComplexMatrix sum = ComplexMatrix::Zero(3, 3);
  for (const auto& b : replay_suffix(phase_offset, false)) sum += b.weight * b.target_state;
  return to_analysis_frame(sum, phase_offset, gate_noise(noise_));
}

std::vector<BranchOutput> ExactEngine::branch_outputs(double phase_offset) const {
  std::array<ComplexMatrix, 4> sums;
  sums.fill(ComplexMatrix::Zero(3, 3));
  double total = 0.0;
  for (const auto& b : replay_suffix(phase_offset, false)) {
    const auto label = branch_of(b.records[1].value_or(Outcome::Bright),
                                 b.records[2].value_or(Outcome::Bright));
    sums[static_cast<int>(label)] += b.weight * b.target_state;
    total += b.weight * b.target_state.trace().real();
  }
  std::vector<BranchOutput> out;
  for (int k = 0; k < 4; ++k) {
    const double p = sums[k].trace().real() / total;
    if (p <= 0.0) continue;
    out.push_back({static_cast<BranchLabel>(k), p,
                   to_analysis_frame(sums[k], phase_offset, gate_noise(noise_))});
  }
  return out;
}

ComplexMatrix ExactEngine::pre_reconstruction_state() const {
  ComplexMatrix sum = ComplexMatrix::Zero(3, 3);
  for (const auto& b : branches_) sum += b.weight * b.target_state;
  return sum / sum.trace().real();
}

double ExactEngine::final_bright_probability(double phase_offset) const {
  const bool has_readout = std::any_of(suffix_template_.begin(), suffix_template_.end(),
                                       [](const SequenceStep& s) {
                                         return std::holds_alternative<Readout>(s.action);
                                       });
  if (!has_readout) {
    throw std::logic_error("final_bright_probability: sequence has no final readout");
  }
  double bright = 0.0;
  double total = 0.0;
  for (const auto& b : replay_suffix(phase_offset, true)) {
    bright += b.weight * b.target_state(0, 0).real();
    total += b.weight * b.target_state.trace().real();
  }
  return apply_detection_error(std::clamp(bright / total, 0.0, 1.0), noise_.detection_error);
}

DensityMatrix run_exact(const InputStateSpec& input, double phase_offset,
                        const noise::NoiseConfig& noise, const ProtocolOptions& options) {
  return ExactEngine(input, noise, options).output(phase_offset);
}

}  // namespace iontele::protocol
