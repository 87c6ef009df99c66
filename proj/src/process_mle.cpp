#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "iontele/errors.hpp"
#include "iontele/tomography.hpp"

namespace iontele::tomo {

namespace {

constexpr int kParams = 16;

Matrix4c lower_from_params(const Eigen::VectorXd& x) {
  if (x.size() != kParams) throw DimensionError("process parameters: expected 16 entries");
  Matrix4c t = Matrix4c::Zero();
  for (int a = 0; a < 4; ++a) t(a, a) = x(a);
  int k = 4;
  for (int a = 1; a < 4; ++a) {
    for (int b = 0; b < a; ++b) {
      t(a, b) = Complex(x(k), x(k + 1));
      k += 2;
    }
  }
  return t;
}

Eigen::VectorXd params_from_lower_gradient(const Matrix4c& g) {
  Eigen::VectorXd out(kParams);
  for (int a = 0; a < 4; ++a) out(a) = g(a, a).real();
  int k = 4;
  for (int a = 1; a < 4; ++a) {
    for (int b = 0; b < a; ++b) {
      out(k) = g(a, b).real();
      out(k + 1) = g(a, b).imag();
      k += 2;
    }
  }
  return out;
}

struct Normalised {
  Matrix4c g;  // T^dag T
  Matrix2c w;  // M^{-1/2}
  Matrix2c v;  // eigenvectors of M
  Eigen::Vector2d m_eig;
};

Normalised normalise(const Matrix4c& t) {
  const auto& a = pauli_basis();
  Normalised out;
  out.g = t.adjoint() * t;
  Matrix2c m = Matrix2c::Zero();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) m += out.g(i, j) * a[j].adjoint() * a[i];
  }
  m = 0.5 * (m + m.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(m);
  out.m_eig = es.eigenvalues();
  out.v = es.eigenvectors();
  if (!(out.m_eig(0) > 0.0)) {
    throw InvariantViolation("process parameters give a singular completeness operator");
  }
  const Eigen::Vector2cd inv_sqrt(1.0 / std::sqrt(out.m_eig(0)), 1.0 / std::sqrt(out.m_eig(1)));
  out.w = out.v * inv_sqrt.asDiagonal() * out.v.adjoint();
  return out;
}

Matrix4c chi_of(const Normalised& n) {
  const auto& a = pauli_basis();
  Matrix4c c;
  for (int m = 0; m < 4; ++m) {
    const Matrix2c aw = a[m] * n.w;
    for (int k = 0; k < 4; ++k) c(m, k) = 0.5 * (a[k].adjoint() * aw).trace();
  }
  Matrix4c chi = c.transpose() * n.g * c.conjugate();
  return 0.5 * (chi + chi.adjoint());
}

struct Data {
  std::vector<Matrix2c> rho;
  std::vector<std::vector<Matrix2c>> projectors;  // per input
  std::vector<std::vector<double>> f;
};

Data data_of(const std::vector<DensityMatrix>& inputs, const std::vector<CountsTable>& outputs) {
  if (inputs.size() != outputs.size()) {
    throw std::invalid_argument("process tomography: one counts table per input required");
  }
  Data d;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].dim() != 2) throw DimensionError("process tomography: qubit inputs required");
    outputs[i].validate();
    d.rho.push_back(inputs[i].matrix());
    std::vector<Matrix2c> proj;
    std::vector<double> f;
    for (const auto& row : outputs[i].rows()) {
      proj.push_back(outcome_projector(row.basis, row.outcome));
      f.push_back(row.count / outputs[i].total_per_basis);
    }
    d.projectors.push_back(std::move(proj));
    d.f.push_back(std::move(f));
  }
  return d;
}

ProcessObjective evaluate(const Eigen::VectorXd& x, const Data& d, bool with_gradient) {
  const auto& a = pauli_basis();
  const Matrix4c t = lower_from_params(x);
  const Normalised n = normalise(t);

  ProcessObjective out{0.0, Eigen::VectorXd::Zero(kParams)};
  Matrix4c k1 = Matrix4c::Zero();
  Matrix2c z = Matrix2c::Zero();
  for (std::size_t i = 0; i < d.rho.size(); ++i) {
    const Matrix2c sigma = n.w * d.rho[i] * n.w;
    Matrix2c e = Matrix2c::Zero();
    for (int m = 0; m < 4; ++m) {
      for (int l = 0; l < 4; ++l) e += n.g(m, l) * a[m] * sigma * a[l].adjoint();
    }
    for (std::size_t j = 0; j < d.f[i].size(); ++j) {
      const double f = d.f[i][j];
      if (f == 0.0) continue;
      const Matrix2c& proj = d.projectors[i][j];
      const double p = (proj * e).trace().real();
      if (!(p > 0.0)) {
        out.value = -std::numeric_limits<double>::infinity();
        return out;
      }
      out.value += f * std::log(p);
      if (!with_gradient) continue;
      const double c = f / p;
      Matrix2c q = Matrix2c::Zero();
      for (int m = 0; m < 4; ++m) {
        for (int l = 0; l < 4; ++l) {
          const Matrix2c apa = a[l].adjoint() * proj * a[m];
          k1(l, m) += c * (apa * sigma).trace();
          q += n.g(m, l) * apa;
        }
      }
      z += c * (d.rho[i] * n.w * q + q * n.w * d.rho[i]);
    }
  }
  if (!with_gradient) return out;

  // Derivative of M^{-1/2} through the eigen-decomposition of M.
  const Eigen::Vector2d& w = n.m_eig;
  Eigen::Matrix2d gamma;
  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < 2; ++l) {
      if (std::abs(w(k) - w(l)) < 1e-12 * std::max(w(k), w(l))) {
        gamma(k, l) = -0.5 * std::pow(0.5 * (w(k) + w(l)), -1.5);
      } else {
        gamma(k, l) = (1.0 / std::sqrt(w(k)) - 1.0 / std::sqrt(w(l))) / (w(k) - w(l));
      }
    }
  }
  const Matrix2c zv = n.v.adjoint() * z * n.v;
  const Matrix2c zm = n.v * gamma.cast<Complex>().cwiseProduct(zv) * n.v.adjoint();
  Matrix4c k = k1;
  for (int m = 0; m < 4; ++m) {
    for (int l = 0; l < 4; ++l) k(l, m) += (a[l].adjoint() * a[m] * zm).trace();
  }
  k = 0.5 * (k + k.adjoint()).eval();
  const Matrix4c tk = 2.0 * t * k;
  out.gradient = params_from_lower_gradient(tk);
  return out;
}

Eigen::VectorXd start_params() {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kParams);
  x.head(4).setConstant(0.5);
  return x;
}

ProcessMleResult fit(const Data& d, const ProcessMleOptions& options) {
  // BFGS on -L with a backtracking Armijo line search.
  Eigen::VectorXd x = start_params();
  ProcessObjective cur = evaluate(x, d, true);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(kParams, kParams);
  ProcessMleResult out{ProcessMatrix::identity(), 0, false, cur.gradient.norm(), cur.value};

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::VectorXd g = -cur.gradient;
    if (g.norm() <= options.gradient_tolerance) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    ProcessObjective next{};
    Eigen::VectorXd xn;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + step * dir;
      next = evaluate(xn, d, true);
      if (std::isfinite(next.value)) {
        const double armijo = -cur.value + 1e-4 * step * slope;
        // Near the optimum the Armijo decrease drops below the rounding error
        // of L; fall back to the approximate Wolfe test on the slope.
        const double new_slope = -next.gradient.dot(dir);
        const bool approx_wolfe = -next.value <= -cur.value + 1e-12 * (1.0 + std::abs(cur.value)) &&
                                  new_slope >= 0.9 * slope && new_slope <= -0.9998 * slope;
        if (-next.value <= armijo || approx_wolfe) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (h.isIdentity()) break;
      h.setIdentity();
      continue;
    }
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = -next.gradient - g;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(kParams, kParams);
      h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    x = xn;
    cur = next;
  }
  out.iterations = it;
  out.gradient_norm = cur.gradient.norm();
  out.converged = out.converged || out.gradient_norm <= options.gradient_tolerance;
  out.log_likelihood = cur.value;
  out.chi = ProcessMatrix(chi_of(normalise(lower_from_params(x))));
  return out;
}

}  // namespace

ProcessMatrix chi_from_channel(const QubitMap& channel) {
  const auto& a = pauli_basis();
  // Column (m, n) holds the action of A_m . A_n^dag on each Pauli input,
  // flattened; the right-hand side is the channel output.
  Eigen::Matrix<Complex, 16, 16> lhs;
  Eigen::Matrix<Complex, 16, 1> rhs;
  for (int j = 0; j < 4; ++j) {
    const Matrix2c out = channel(a[j]);
    for (int e = 0; e < 4; ++e) rhs(4 * j + e) = out(e / 2, e % 2);
    for (int m = 0; m < 4; ++m) {
      for (int n = 0; n < 4; ++n) {
        const Matrix2c term = a[m] * a[j] * a[n].adjoint();
        for (int e = 0; e < 4; ++e) lhs(4 * j + e, 4 * m + n) = term(e / 2, e % 2);
      }
    }
  }
  const Eigen::Matrix<Complex, 16, 1> sol = lhs.fullPivLu().solve(rhs);
  Matrix4c chi;
  for (int m = 0; m < 4; ++m) {
    for (int n = 0; n < 4; ++n) chi(m, n) = sol(4 * m + n);
  }
  return ProcessMatrix(0.5 * (chi + chi.adjoint()));
}

int input_rank(const std::vector<DensityMatrix>& inputs) {
  if (inputs.empty()) return 0;
  Eigen::MatrixXd v(4, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].dim() != 2) throw DimensionError("input_rank: qubit inputs required");
    const Vector3 r = bloch_vector(inputs[i]);
    v.col(static_cast<Eigen::Index>(i)) << 1.0, r(0), r(1), r(2);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  lu.setThreshold(1e-8);
  return static_cast<int>(lu.rank());
}

ProcessObjective process_log_likelihood(const Eigen::VectorXd& params,
                                        const std::vector<DensityMatrix>& inputs,
                                        const std::vector<CountsTable>& outputs) {
  return evaluate(params, data_of(inputs, outputs), true);
}

Matrix4c chi_from_params(const Eigen::VectorXd& params) {
  return chi_of(normalise(lower_from_params(params)));
}

ProcessMleResult mle_process(const std::vector<DensityMatrix>& inputs,
                             const std::vector<CountsTable>& outputs,
                             const ProcessMleOptions& options) {
  const int rank = input_rank(inputs);
  if (rank < 4) {
    throw std::invalid_argument("mle_process: inputs span only " + std::to_string(rank) +
                                " of the 4 real dimensions needed");
  }
  return fit(data_of(inputs, outputs), options);
}

BootstrapSummary bootstrap_process(const std::vector<DensityMatrix>& inputs,
                                   const std::vector<CountsTable>& outputs,
                                   const ProcessMatrix& fitted, int resamples,
                                   std::uint64_t seed) {
  if (resamples < 2) throw std::invalid_argument("bootstrap_process: at least 2 resamples");
  for (const auto& o : outputs) {
    if (o.expected) {
      throw std::invalid_argument("bootstrap_process: expected-count tables carry no shot noise");
    }
  }
  if (inputs.size() != outputs.size()) {
    throw std::invalid_argument("bootstrap_process: one counts table per input required");
  }
  std::mt19937_64 rng(seed);
  const ProcessMatrix ideal = ProcessMatrix::identity();
  std::vector<Eigen::VectorXd> samples;
  for (int r = 0; r < resamples; ++r) {
    std::vector<CountsTable> drawn;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const DensityMatrix out_state =
          DensityMatrix::from_numerical(fitted.apply(inputs[i].matrix()));
      CountsTable t;
      t.total_per_basis = outputs[i].total_per_basis;
      const auto n = static_cast<std::uint64_t>(t.total_per_basis);
      for (Basis b : kBases) {
        std::binomial_distribution<std::uint64_t> draw(n, bright_probability(out_state, b));
        const auto bright = draw(rng);
        t.at(b, Outcome::Bright) = static_cast<double>(bright);
        t.at(b, Outcome::Dark) = static_cast<double>(n - bright);
      }
      drawn.push_back(t);
    }
    const ProcessMatrix chi = mle_process(inputs, drawn).chi;
    const AffineMap map = affine_decompose(chi);
    Eigen::VectorXd s(10);
    s << chi.chi()(0, 0).real(), process_fidelity(chi, ideal), average_fidelity(chi), map.b(0),
        map.b(1), map.b(2), map.s_eigenvalues(0), map.s_eigenvalues(1), map.s_eigenvalues(2),
        map.rotation_angle;
    samples.push_back(s);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(resamples);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(10);
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  const Eigen::VectorXd sd = (var / static_cast<double>(resamples - 1)).cwiseSqrt();

  BootstrapSummary out;
  out.resamples = resamples;
  out.chi_II = sd(0);
  out.process_fidelity = sd(1);
  out.average_fidelity = sd(2);
  out.b = sd.segment<3>(3);
  out.s_eigenvalues = sd.segment<3>(6);
  out.rotation_angle = sd(9);
  return out;
}

}  // namespace iontele::tomo
