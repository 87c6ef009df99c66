#include "iontele/ion_trap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "iontele/errors.hpp"

namespace iontele::trap {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<long> strides_of(const std::vector<int>& dims) {
  std::vector<long> stride(dims.size(), 1);
  for (int s = static_cast<int>(dims.size()) - 2; s >= 0; --s) {
    stride[s] = stride[s + 1] * dims[s + 1];
  }
  return stride;
}

// Offsets of the local basis (local subsystems, row-major) and of the
// complementary "base" indices.
struct IndexPlan {
  std::vector<long> local;
  std::vector<long> base;
};

IndexPlan plan_for(const RegisterDims& reg, const std::vector<int>& subsystems) {
  const std::vector<int> dims = reg.subsystem_dims();
  const std::vector<long> stride = strides_of(dims);
  std::vector<bool> is_local(dims.size(), false);
  for (int s : subsystems) is_local[s] = true;

  auto expand = [&](bool want_local) {
    std::vector<long> offsets{0};
    for (std::size_t s = 0; s < dims.size(); ++s) {
      if (is_local[s] != want_local) continue;
      std::vector<long> next;
      next.reserve(offsets.size() * dims[s]);
      for (long o : offsets) {
        for (int v = 0; v < dims[s]; ++v) next.push_back(o + v * stride[s]);
      }
      offsets = std::move(next);
    }
    return offsets;
  };
  return {expand(true), expand(false)};
}

void check_ion(const RegisterDims& dims, int ion) {
  if (ion < 0 || ion >= dims.n_ions) {
    throw std::invalid_argument("ion index " + std::to_string(ion) + " out of range for " +
                                std::to_string(dims.n_ions) + " ions");
  }
}

LocalOperator two_level_local(const RegisterDims& dims, int ion, int upper, double theta,
                              double phi) {
  check_ion(dims, ion);
  const Matrix2c r = rotation(theta, phi);
  ComplexMatrix op = ComplexMatrix::Identity(kLevelsPerIon, kLevelsPerIon);
  const int idx[2] = {static_cast<int>(IonLevel::S), upper};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) op(idx[a], idx[b]) = r(a, b);
  }
  return {std::move(op), {ion}};
}

}  // namespace

int RegisterDims::dim() const {
  int d = fock_cutoff;
  for (int i = 0; i < n_ions; ++i) d *= kLevelsPerIon;
  return d;
}

std::vector<int> RegisterDims::subsystem_dims() const {
  std::vector<int> dims(n_ions, kLevelsPerIon);
  dims.push_back(fock_cutoff);
  return dims;
}

void validate_pulse(const Pulse& pulse, const RegisterDims& dims) {
  std::visit(Overloaded{
                 [&](const Wait& w) {
                   if (!(w.duration_us >= 0.0)) {
                     throw std::invalid_argument("wait duration must be non-negative");
                   }
                 },
                 [&](const Detect& d) { check_ion(dims, d.ion); },
                 [&](const auto& p) {
                   check_ion(dims, p.ion);
                   if (!(p.theta >= 0.0) || !std::isfinite(p.theta) || !std::isfinite(p.phi)) {
                     throw std::invalid_argument("pulse area must be finite and non-negative");
                   }
                 },
             },
             pulse);
}

std::optional<int> addressed_ion(const Pulse& pulse) {
  return std::visit(Overloaded{
                        [](const Wait&) -> std::optional<int> { return std::nullopt; },
                        [](const auto& p) -> std::optional<int> { return p.ion; },
                    },
                    pulse);
}

Matrix2c rotation(double theta, double phi) {
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  Matrix2c r;
  r << c, -kI * std::exp(kI * phi) * s, -kI * std::exp(-kI * phi) * s, c;
  return r;
}

LocalOperator carrier_local(const RegisterDims& dims, int ion, double theta, double phi) {
  return two_level_local(dims, ion, static_cast<int>(IonLevel::D), theta, phi);
}

LocalOperator hide_local(const RegisterDims& dims, int ion, double theta, double phi) {
  return two_level_local(dims, ion, static_cast<int>(IonLevel::H), theta, phi);
}

LocalOperator sideband_local(const RegisterDims& dims, int ion, double theta, double phi) {
  check_ion(dims, ion);
  const int nf = dims.fock_cutoff;
  if (nf < 2) throw std::invalid_argument("sideband pulses need fock_cutoff >= 2");
  // Local index = level * fock_cutoff + n (ion is more significant than motion).
  ComplexMatrix op = ComplexMatrix::Identity(kLevelsPerIon * nf, kLevelsPerIon * nf);
  const int s_row = static_cast<int>(IonLevel::S) * nf;
  const int d_row = static_cast<int>(IonLevel::D) * nf;
  // Blocks {|S,n>, |D,n+1>}; |D,0>, H and the truncated |S,n_max> are fixed.
  for (int n = 0; n + 1 < nf; ++n) {
    const Matrix2c r = rotation(theta * std::sqrt(static_cast<double>(n + 1)), phi);
    const int idx[2] = {s_row + n, d_row + n + 1};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) op(idx[a], idx[b]) = r(a, b);
    }
  }
  return {std::move(op), {ion, dims.motion_subsystem()}};
}

LocalOperator pulse_local(const RegisterDims& dims, const Pulse& pulse) {
  return std::visit(
      Overloaded{
          [&](const Carrier& p) { return carrier_local(dims, p.ion, p.theta, p.phi); },
          [&](const BlueSideband& p) { return sideband_local(dims, p.ion, p.theta, p.phi); },
          [&](const Hide& p) { return hide_local(dims, p.ion, p.theta, p.phi); },
          [](const auto&) -> LocalOperator {
            throw std::invalid_argument("pulse_local: Wait/Detect have no unitary");
          },
      },
      pulse);
}

ComplexMatrix embed(const LocalOperator& local, const RegisterDims& dims) {
  const IndexPlan plan = plan_for(dims, local.subsystems);
  const int d = dims.dim();
  ComplexMatrix u = ComplexMatrix::Zero(d, d);
  const auto l = static_cast<Eigen::Index>(plan.local.size());
  for (long b : plan.base) {
    for (Eigen::Index i = 0; i < l; ++i) {
      for (Eigen::Index j = 0; j < l; ++j) u(b + plan.local[i], b + plan.local[j]) = local.op(i, j);
    }
  }
  return u;
}

ComplexMatrix carrier_unitary(const RegisterDims& dims, int ion, double theta, double phi) {
  return embed(carrier_local(dims, ion, theta, phi), dims);
}

ComplexMatrix sideband_unitary(const RegisterDims& dims, int ion, double theta, double phi) {
  return embed(sideband_local(dims, ion, theta, phi), dims);
}

ComplexMatrix hide_unitary(const RegisterDims& dims, int ion, double theta, double phi) {
  return embed(hide_local(dims, ion, theta, phi), dims);
}

// ---------------------------------------------------------------------------
// TrapRegister

TrapRegister::TrapRegister(const RegisterDims& dims,
                           std::variant<ComplexVector, ComplexMatrix> state,
                           double leakage_budget)
    : dims_(dims), state_(std::move(state)), leakage_budget_(leakage_budget) {}

TrapRegister TrapRegister::initialize(int n_ions, int fock_cutoff, double leakage_budget) {
  if (n_ions < 1) throw std::invalid_argument("initialize: n_ions must be >= 1");
  if (fock_cutoff < 2) throw std::invalid_argument("initialize: fock_cutoff must be >= 2");
  const RegisterDims dims{n_ions, fock_cutoff};
  ComplexVector psi = ComplexVector::Zero(dims.dim());
  psi[0] = 1.0;
  return TrapRegister(dims, std::move(psi), leakage_budget);
}

TrapRegister TrapRegister::from_state(const RegisterDims& dims, ComplexVector psi,
                                      double leakage_budget) {
  if (psi.size() != dims.dim()) throw DimensionError("TrapRegister: state dimension mismatch");
  return TrapRegister(dims, std::move(psi), leakage_budget);
}

TrapRegister TrapRegister::from_density(const RegisterDims& dims, ComplexMatrix rho,
                                        double leakage_budget) {
  if (rho.rows() != dims.dim() || rho.cols() != dims.dim()) {
    throw DimensionError("TrapRegister: density dimension mismatch");
  }
  return TrapRegister(dims, std::move(rho), leakage_budget);
}

TrapRegister initialize(int n_ions, int fock_cutoff) {
  return TrapRegister::initialize(n_ions, fock_cutoff);
}

const ComplexVector& TrapRegister::state_vector() const {
  if (!is_pure()) throw std::logic_error("TrapRegister: density representation has no state vector");
  return std::get<ComplexVector>(state_);
}

const ComplexMatrix& TrapRegister::density() const {
  if (is_pure()) throw std::logic_error("TrapRegister: pure representation; use density_matrix()");
  return std::get<ComplexMatrix>(state_);
}

ComplexMatrix TrapRegister::density_matrix() const {
  if (is_pure()) {
    const auto& psi = std::get<ComplexVector>(state_);
    return psi * psi.adjoint();
  }
  return std::get<ComplexMatrix>(state_);
}

TrapRegister TrapRegister::to_density() const {
  TrapRegister out(dims_, density_matrix(), leakage_budget_);
  out.max_top_fock_ = max_top_fock_;
  out.elapsed_us_ = elapsed_us_;
  return out;
}

double TrapRegister::trace() const {
  if (is_pure()) return std::get<ComplexVector>(state_).squaredNorm();
  return std::get<ComplexMatrix>(state_).trace().real();
}

double TrapRegister::level_population(int ion, IonLevel level) const {
  check_ion(dims_, ion);
  const std::vector<long> stride = strides_of(dims_.subsystem_dims());
  const int d = dims_.dim();
  double pop = 0.0;
  for (int k = 0; k < d; ++k) {
    if ((k / stride[ion]) % kLevelsPerIon != static_cast<int>(level)) continue;
    pop += is_pure() ? std::norm(std::get<ComplexVector>(state_)[k])
                     : std::get<ComplexMatrix>(state_)(k, k).real();
  }
  return pop;
}

double TrapRegister::top_fock_population() const {
  const int nf = dims_.fock_cutoff;
  const int d = dims_.dim();
  double pop = 0.0;
  for (int k = nf - 1; k < d; k += nf) {
    pop += is_pure() ? std::norm(std::get<ComplexVector>(state_)[k])
                     : std::get<ComplexMatrix>(state_)(k, k).real();
  }
  return pop;
}

void TrapRegister::check_leakage() {
  const double total = trace();
  const double top = total > 0.0 ? top_fock_population() / total : 0.0;
  if (top > max_top_fock_) max_top_fock_ = top;
  if (top > leakage_budget_) {
    std::ostringstream msg;
    msg << "population " << top << " in the top Fock level exceeds the leakage budget "
        << leakage_budget_ << "; increase fock_cutoff";
    throw LeakageError(msg.str());
  }
}

void TrapRegister::apply(const LocalOperator& local) {
  const IndexPlan plan = plan_for(dims_, local.subsystems);
  const auto l = static_cast<Eigen::Index>(plan.local.size());
  if (local.op.rows() != l || local.op.cols() != l) {
    throw DimensionError("TrapRegister::apply: local operator dimension mismatch");
  }
  const auto nb = static_cast<Eigen::Index>(plan.base.size());

  // Gather every local block into the columns of one matrix so the update is
  // a single product.
  if (is_pure()) {
    auto& psi = std::get<ComplexVector>(state_);
    ComplexMatrix x(l, nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (Eigen::Index i = 0; i < l; ++i) x(i, b) = psi[plan.base[b] + plan.local[i]];
    }
    const ComplexMatrix y = local.op * x;
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (Eigen::Index i = 0; i < l; ++i) psi[plan.base[b] + plan.local[i]] = y(i, b);
    }
    return;
  }

  auto& rho = std::get<ComplexMatrix>(state_);
  const Eigen::Index d = rho.rows();
  ComplexMatrix x(l, nb * d);
  ComplexMatrix y(l, nb * d);
  // rho <- U rho
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (Eigen::Index i = 0; i < l; ++i) x(i, c * nb + b) = rho(plan.base[b] + plan.local[i], c);
    }
  }
  y.noalias() = local.op * x;
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (Eigen::Index i = 0; i < l; ++i) rho(plan.base[b] + plan.local[i], c) = y(i, c * nb + b);
    }
  }
  // rho <- rho U^dag, i.e. conj(U) on every row
  for (Eigen::Index b = 0; b < nb; ++b) {
    for (Eigen::Index i = 0; i < l; ++i) {
      const long col = plan.base[b] + plan.local[i];
      for (Eigen::Index r = 0; r < d; ++r) x(i, r * nb + b) = rho(r, col);
    }
  }
  y.noalias() = local.op.conjugate() * x;
  for (Eigen::Index b = 0; b < nb; ++b) {
    for (Eigen::Index i = 0; i < l; ++i) {
      const long col = plan.base[b] + plan.local[i];
      for (Eigen::Index r = 0; r < d; ++r) rho(r, col) = y(i, r * nb + b);
    }
  }
}

void TrapRegister::apply_diagonal(const ComplexVector& phases) {
  if (phases.size() != dims_.dim()) throw DimensionError("apply_diagonal: dimension mismatch");
  if (is_pure()) {
    std::get<ComplexVector>(state_).array() *= phases.array();
    return;
  }
  auto& rho = std::get<ComplexMatrix>(state_);
  const ComplexVector conj = phases.conjugate();
  for (Eigen::Index c = 0; c < rho.cols(); ++c) {
    rho.col(c).array() *= phases.array() * conj[c];
  }
}

void TrapRegister::project(const std::vector<bool>& mask) {
  const int d = dims_.dim();
  if (static_cast<int>(mask.size()) != d) throw DimensionError("project: mask size mismatch");
  if (is_pure()) {
    auto& psi = std::get<ComplexVector>(state_);
    for (int k = 0; k < d; ++k) {
      if (!mask[k]) psi[k] = 0.0;
    }
    return;
  }
  auto& rho = std::get<ComplexMatrix>(state_);
  for (int k = 0; k < d; ++k) {
    if (mask[k]) continue;
    rho.row(k).setZero();
    rho.col(k).setZero();
  }
}

void TrapRegister::scale(double factor) {
  if (is_pure()) {
    std::get<ComplexVector>(state_) *= std::sqrt(factor);
  } else {
    std::get<ComplexMatrix>(state_) *= factor;
  }
}

void TrapRegister::accumulate(const TrapRegister& other, double weight) {
  if (is_pure() || other.is_pure()) {
    throw std::logic_error("TrapRegister::accumulate: density representations required");
  }
  if (other.dims_.dim() != dims_.dim()) throw DimensionError("accumulate: dimension mismatch");
  std::get<ComplexMatrix>(state_) += weight * std::get<ComplexMatrix>(other.state_);
  max_top_fock_ = std::max(max_top_fock_, other.max_top_fock_);
}

void TrapRegister::transform_ion_blocks(
    int ion, const std::function<Eigen::Matrix3cd(const Eigen::Matrix3cd&)>& f) {
  check_ion(dims_, ion);
  if (is_pure()) throw std::logic_error("transform_ion_blocks: density representation required");
  auto& rho = std::get<ComplexMatrix>(state_);
  const IndexPlan plan = plan_for(dims_, {ion});
  Eigen::Matrix3cd block;
  for (long cb : plan.base) {
    for (long rb : plan.base) {
      for (int j = 0; j < kLevelsPerIon; ++j) {
        for (int i = 0; i < kLevelsPerIon; ++i) block(i, j) = rho(rb + plan.local[i], cb + plan.local[j]);
      }
      block = f(block);
      for (int j = 0; j < kLevelsPerIon; ++j) {
        for (int i = 0; i < kLevelsPerIon; ++i) rho(rb + plan.local[i], cb + plan.local[j]) = block(i, j);
      }
    }
  }
}

void TrapRegister::normalize() {
  const double t = trace();
  if (!(t > 0.0)) throw InvariantViolation("TrapRegister: cannot normalise a zero state");
  scale(1.0 / t);
  if (!is_pure()) {
    auto& rho = std::get<ComplexMatrix>(state_);
    rho = 0.5 * (rho + rho.adjoint()).eval();
  }
}

// ---------------------------------------------------------------------------

TrapRegister apply_pulse(TrapRegister reg, const Pulse& pulse) {
  validate_pulse(pulse, reg.dims());
  if (std::holds_alternative<Detect>(pulse)) {
    throw std::invalid_argument("apply_pulse: Detect must go through fluorescence_measure");
  }
  if (const auto* w = std::get_if<Wait>(&pulse)) {
    reg.advance_time(w->duration_us);
    return reg;
  }
  reg.apply(pulse_local(reg.dims(), pulse));
  reg.check_leakage();
  return reg;
}

Outcome flip(Outcome o) { return o == Outcome::Bright ? Outcome::Dark : Outcome::Bright; }

std::vector<bool> fluorescence_mask(const RegisterDims& dims, int ion, Outcome outcome) {
  check_ion(dims, ion);
  const std::vector<long> stride = strides_of(dims.subsystem_dims());
  const int d = dims.dim();
  std::vector<bool> mask(d);
  for (int k = 0; k < d; ++k) {
    const bool in_s = (k / stride[ion]) % kLevelsPerIon == static_cast<int>(IonLevel::S);
    mask[k] = (outcome == Outcome::Bright) == in_s;
  }
  return mask;
}

MeasurementResult fluorescence_project(TrapRegister reg, int ion, Outcome outcome) {
  const double total = reg.trace();
  reg.project(fluorescence_mask(reg.dims(), ion, outcome));
  const double p = reg.trace() / total;
  if (!(p > 0.0)) {
    throw InvariantViolation("fluorescence_project: requested outcome has zero probability");
  }
  reg.normalize();
  return {outcome, outcome, p, std::move(reg)};
}

MeasurementResult fluorescence_measure(TrapRegister reg, int ion, std::mt19937_64& rng,
                                       double detection_error) {
  check_ion(reg.dims(), ion);
  const double p_bright = std::clamp(reg.level_population(ion, IonLevel::S) / reg.trace(), 0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Outcome truth = uniform(rng) < p_bright ? Outcome::Bright : Outcome::Dark;
  Outcome reported = truth;
  if (detection_error > 0.0 && uniform(rng) < detection_error) reported = flip(truth);
  MeasurementResult res = fluorescence_project(std::move(reg), ion, truth);
  res.outcome = reported;
  return res;
}

}  // namespace iontele::trap
