#include <algorithm>
#include <array>
#include <exception>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>

#include "iontele/errors.hpp"
#include "protocol_internal.hpp"

namespace iontele::protocol {

namespace detail {

std::vector<bool> collective_dark_mask(const trap::RegisterDims& dims) {
  std::vector<bool> mask(dims.dim(), true);
  for (int ion = 0; ion < dims.n_ions; ++ion) {
    const auto dark = trap::fluorescence_mask(dims, ion, Outcome::Dark);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = mask[k] && dark[k];
  }
  return mask;
}

trap::Pulse shift_phase(trap::Pulse pulse, double shift) {
  std::visit(Overloaded{
                 [&](trap::Carrier& p) { p.phi += shift; },
                 [&](trap::BlueSideband& p) { p.phi += shift; },
                 [&](trap::Hide& p) { p.phi += shift; },
                 [](auto&) { throw std::invalid_argument("shift_phase: pulse has no phase"); },
             },
             pulse);
  return pulse;
}

}  // namespace detail

namespace {

int count_pulse_slots(const Sequence& sequence) {
  int n = 0;
  for (const auto& step : sequence) {
    if (const auto* p = std::get_if<trap::Pulse>(&step.action)) {
      if (detail::is_coherent(*p)) ++n;
    } else if (std::holds_alternative<ConditionalPulse>(step.action)) {
      ++n;
    }
  }
  return n;
}

class ShotRunner {
 public:
  ShotRunner(const noise::NoiseConfig& config, std::uint64_t seed, std::uint64_t shot,
             const ProtocolOptions& options, int slots)
      : config_(config),
        noise_(noise::sample_shot_noise(config, seed, shot, kNumIons, slots)),
        measure_rng_(noise::make_stream(seed, shot, noise::kMeasurementStream)),
        pauli_rng_(noise::make_stream(seed, shot, noise::kPauliStream)),
        reg_(trap::TrapRegister::initialize(kNumIons, options.fock_cutoff,
                                            options.leakage_budget)) {}

  void pulse(const trap::Pulse& p) {
    if (const auto* w = std::get_if<trap::Wait>(&p)) {
      accrue(w->duration_us);
      return;
    }
    if (!detail::is_coherent(p)) {
      throw std::invalid_argument("run_shot: bare Detect steps are not supported; use Readout");
    }
    fire(p);
    accrue(noise::pulse_duration(p, config_.durations));
  }

  void conditional(const ConditionalPulse& c) {
    const auto& rec = records_.at(c.record);
    if (!rec) throw std::invalid_argument("run_shot: conditional on an unfilled record");
    if (*rec == c.when) {
      fire(c.pulse);
    } else {
      ++slot_;
    }
    accrue(noise::pulse_duration(c.pulse, config_.durations));
  }

  Outcome readout(const Readout& r) {
    Outcome reported;
    if (r.channel == ReadoutChannel::Pmt) {
      const double total = reg_.trace();
      std::vector<bool> mask = detail::collective_dark_mask(reg_.dims());
      trap::TrapRegister dark = reg_;
      dark.project(mask);
      const double p_dark = dark.trace() / total;
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      const Outcome truth = uniform(measure_rng_) < p_dark ? Outcome::Dark : Outcome::Bright;
      if (truth == Outcome::Dark) {
        reg_ = std::move(dark);
      } else {
        mask.flip();
        reg_.project(mask);
      }
      reg_.normalize();
      reported = truth;
      if (config_.detection_error > 0.0 && uniform(measure_rng_) < config_.detection_error) {
        reported = trap::flip(truth);
      }
    } else {
      auto res = trap::fluorescence_measure(std::move(reg_), r.detect.ion, measure_rng_,
                                            config_.detection_error);
      reg_ = std::move(res.reg);
      reported = res.outcome;
    }
    if (r.record > 0) records_.at(r.record) = reported;
    accrue(config_.durations.detection_us);
    return reported;
  }

  const std::array<std::optional<Outcome>, 3>& records() const { return records_; }

 private:
  void fire(const trap::Pulse& p) {
    const trap::Pulse actual = noise::perturb_pulse(p, noise_, slot_++);
    reg_.apply(trap::pulse_local(reg_.dims(), actual));
    reg_.check_leakage();
    const Pauli jump = noise::sample_depolarizing_pauli(config_.depolarizing_per_pulse, pauli_rng_);
    if (jump != Pauli::I) {
      reg_.apply(noise::pauli_local(reg_.dims(), *trap::addressed_ion(p), jump));
    }
  }

  void accrue(double us) {
    reg_ = noise::accrue_phase(std::move(reg_), us, noise_);
    reg_.advance_time(us);
  }

  const noise::NoiseConfig& config_;
  noise::ShotNoise noise_;
  std::mt19937_64 measure_rng_;
  std::mt19937_64 pauli_rng_;
  trap::TrapRegister reg_;
  std::array<std::optional<Outcome>, 3> records_{};
  int slot_ = 0;
};

}  // namespace

ShotRecord run_shot(const Sequence& sequence, const noise::NoiseConfig& noise,
                    std::uint64_t master_seed, std::uint64_t shot_index,
                    const ProtocolOptions& options) {
  const int slots = std::max(noise::kDefaultPulseSlots, count_pulse_slots(sequence));
  ShotRunner runner(noise, master_seed, shot_index, options, slots);
  ShotRecord out;
  out.shot_index = shot_index;
  for (const auto& step : sequence) {
    std::visit(detail::Overloaded{
                   [](const Marker&) {},
                   [&](const trap::Pulse& p) { runner.pulse(p); },
                   [&](const ConditionalPulse& c) { runner.conditional(c); },
                   [&](const Readout& r) {
                     const Outcome o = runner.readout(r);
                     if (r.channel == ReadoutChannel::Camera) out.final_outcome = o;
                   },
               },
               step.action);
  }
  const auto& rec = runner.records();
  out.pmt1 = rec[1].value_or(Outcome::Bright);
  out.pmt2 = rec[2].value_or(Outcome::Bright);
  out.branch = branch_of(out.pmt1, out.pmt2);
  return out;
}

std::vector<ShotRecord> run_shots(const Sequence& sequence, const noise::NoiseConfig& noise,
                                  std::uint64_t master_seed, std::uint64_t n_shots,
                                  const ProtocolOptions& options, int workers) {
  noise.validate();
  validate_sequence(sequence, options);
  if (workers < 1) throw std::invalid_argument("run_shots: workers must be >= 1");
  std::vector<ShotRecord> out(n_shots);
  const auto n_workers = static_cast<std::uint64_t>(workers);
  std::vector<std::exception_ptr> errors(n_workers);

  auto work = [&](std::uint64_t w) {
    try {
      for (std::uint64_t i = w; i < n_shots; i += n_workers) {
        out[i] = run_shot(sequence, noise, master_seed, i, options);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::uint64_t w = 0; w < n_workers; ++w) threads.emplace_back(work, w);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace iontele::protocol
