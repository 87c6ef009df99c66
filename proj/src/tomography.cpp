#include "iontele/tomography.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "iontele/errors.hpp"

namespace iontele::tomo {

namespace {

int basis_index(Basis b) { return static_cast<int>(b); }
int outcome_index(Outcome o) { return o == Outcome::Bright ? 0 : 1; }

const char* outcome_name(Outcome o) { return o == Outcome::Bright ? "Bright" : "Dark"; }

}  // namespace

double& CountsTable::at(Basis b, Outcome o) { return counts[basis_index(b)][outcome_index(o)]; }
double CountsTable::at(Basis b, Outcome o) const {
  return counts[basis_index(b)][outcome_index(o)];
}

std::vector<CountsTable::Row> CountsTable::rows() const {
  std::vector<Row> out;
  for (Basis b : kBases) {
    for (Outcome o : {Outcome::Bright, Outcome::Dark}) out.push_back({b, o, at(b, o)});
  }
  return out;
}

void CountsTable::validate() const {
  if (!(total_per_basis > 0.0)) throw std::invalid_argument("CountsTable: empty table");
  for (Basis b : kBases) {
    double sum = 0.0;
    for (Outcome o : {Outcome::Bright, Outcome::Dark}) {
      const double c = at(b, o);
      if (!(c >= 0.0) || !std::isfinite(c)) {
        throw std::invalid_argument("CountsTable: counts must be finite and non-negative");
      }
      if (!expected && c != std::floor(c)) {
        throw std::invalid_argument("CountsTable: sampled counts must be integers");
      }
      sum += c;
    }
    if (std::abs(sum - total_per_basis) > 1e-9 * total_per_basis) {
      throw std::invalid_argument(std::string("CountsTable: basis ") + protocol::basis_name(b) +
                                  " counts do not sum to total_per_basis");
    }
  }
}

Matrix2c outcome_projector(Basis basis, Outcome outcome) {
  const Pauli p = basis == Basis::X ? Pauli::X : (basis == Basis::Y ? Pauli::Y : Pauli::Z);
  const double sign = outcome == Outcome::Bright ? 1.0 : -1.0;
  return 0.5 * (Matrix2c::Identity() + sign * pauli(p));
}

Matrix2c basis_rotation(Basis basis) {
  using std::numbers::pi;
  switch (basis) {
    case Basis::X:
      return trap::rotation(pi / 2, pi / 2);
    case Basis::Y:
      return trap::rotation(pi / 2, 0.0);
    case Basis::Z:
      break;
  }
  return Matrix2c::Identity();
}

double bright_probability(const DensityMatrix& rho, Basis basis) {
  if (rho.dim() != 2) throw DimensionError("bright_probability: qubit state required");
  const Matrix2c r = basis_rotation(basis);
  const Matrix2c rotated = r * rho.matrix() * r.adjoint();
  return std::clamp(rotated(0, 0).real(), 0.0, 1.0);
}

CountsTable simulate_state_tomography(const DensityMatrix& rho, std::uint64_t shots_per_basis,
                                      std::mt19937_64& rng, double detection_error) {
  if (!(detection_error >= 0.0 && detection_error <= 1.0)) {
    throw std::invalid_argument("simulate_state_tomography: detection_error must lie in [0, 1]");
  }
  CountsTable out;
  out.expected = shots_per_basis == 0;
  out.total_per_basis = out.expected ? 1.0 : static_cast<double>(shots_per_basis);
  for (Basis b : kBases) {
    const double p_true = bright_probability(rho, b);
    const double p = (1.0 - detection_error) * p_true + detection_error * (1.0 - p_true);
    if (out.expected) {
      out.at(b, Outcome::Bright) = p;
      out.at(b, Outcome::Dark) = 1.0 - p;
    } else {
      std::binomial_distribution<std::uint64_t> draw(shots_per_basis, p);
      const auto bright = draw(rng);
      out.at(b, Outcome::Bright) = static_cast<double>(bright);
      out.at(b, Outcome::Dark) = static_cast<double>(shots_per_basis - bright);
    }
  }
  return out;
}

CountsTable teleported_counts(const protocol::InputStateSpec& input,
                              const noise::NoiseConfig& noise, double phase_offset,
                              std::uint64_t shots, std::uint64_t seed, int workers,
                              const protocol::ProtocolOptions& options) {
  using namespace protocol;
  CountsTable out;
  out.expected = shots == 0;
  out.total_per_basis = out.expected ? 1.0 : static_cast<double>(shots);
  if (out.expected) {
    const ExactEngine engine(build_sequence(input, phase_offset, Tomography{Basis::Z}, options),
                             noise, options, phase_offset);
    for (Basis b : kBases) {
      const double p =
          engine.with_suffix_from(build_sequence(input, phase_offset, Tomography{b}, options))
              .final_bright_probability(phase_offset);
      out.at(b, Outcome::Bright) = p;
      out.at(b, Outcome::Dark) = 1.0 - p;
    }
    return out;
  }
  for (Basis b : kBases) {
    const Sequence seq = build_sequence(input, phase_offset, Tomography{b}, options);
    // Distinct master seeds per basis keep the three runs independent.
    const std::uint64_t basis_seed = seed * 3 + static_cast<std::uint64_t>(basis_index(b));
    const auto records = run_shots(seq, noise, basis_seed, shots, options, workers);
    std::uint64_t bright = 0;
    for (const auto& r : records) bright += r.final_outcome == Outcome::Bright ? 1 : 0;
    out.at(b, Outcome::Bright) = static_cast<double>(bright);
    out.at(b, Outcome::Dark) = static_cast<double>(shots - bright);
  }
  return out;
}

// ---------------------------------------------------------------------------
// State MLE

namespace {

struct Frequencies {
  std::vector<Matrix2c> projectors;
  std::vector<double> f;
};

Frequencies frequencies_of(const CountsTable& counts) {
  counts.validate();
  Frequencies out;
  for (const auto& row : counts.rows()) {
    out.projectors.push_back(outcome_projector(row.basis, row.outcome));
    out.f.push_back(row.count / counts.total_per_basis);
  }
  return out;
}

double likelihood_of(const Frequencies& fr, const Matrix2c& rho) {
  double l = 0.0;
  for (std::size_t j = 0; j < fr.f.size(); ++j) {
    if (fr.f[j] == 0.0) continue;
    const double p = (fr.projectors[j] * rho).trace().real();
    if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
    l += fr.f[j] * std::log(p);
  }
  return l;
}

}  // namespace

double log_likelihood(const CountsTable& counts, const DensityMatrix& rho) {
  return likelihood_of(frequencies_of(counts), rho.matrix());
}

StateMleResult mle_state(const CountsTable& counts, const StateMleOptions& options) {
  if (!(options.dilution > 0.0 && options.dilution <= 1.0)) {
    throw std::invalid_argument("mle_state: dilution must lie in (0, 1]");
  }
  const Frequencies fr = frequencies_of(counts);
  Matrix2c rho = 0.5 * Matrix2c::Identity();
  double like = likelihood_of(fr, rho);
  StateMleResult out{DensityMatrix::maximally_mixed(2), 0, false, like};

  for (int it = 1; it <= options.max_iterations; ++it) {
    Matrix2c r = Matrix2c::Zero();
    for (std::size_t j = 0; j < fr.f.size(); ++j) {
      if (fr.f[j] == 0.0) continue;
      const double p = (fr.projectors[j] * rho).trace().real();
      r += (fr.f[j] / p) * fr.projectors[j];
    }
    const Matrix2c rrr = r * rho * r;
    const Matrix2c target = rrr / rrr.trace().real();

    double lambda = options.dilution;
    Matrix2c next;
    double next_like;
    for (;;) {
      next = (1.0 - lambda) * rho + lambda * target;
      next = 0.5 * (next + next.adjoint()).eval();
      next /= next.trace().real();
      next_like = likelihood_of(fr, next);
      if (next_like >= like || lambda < 1e-12) break;
      lambda *= 0.5;
    }
    const double change = (next - rho).cwiseAbs().maxCoeff();
    out.iterations = it;
    if (next_like >= like) {
      rho = next;
      like = next_like;
    }
    if (change <= options.tolerance || next_like < like) {
      out.converged = change <= options.tolerance;
      break;
    }
  }
  out.rho = DensityMatrix::from_numerical(rho);
  out.log_likelihood = like;
  return out;
}

// ---------------------------------------------------------------------------
// Fidelities

double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal) {
  Eigen::SelfAdjointEigenSolver<Matrix4c> solver(chi_ideal.chi());
  const auto& ev = solver.eigenvalues();
  if (ev(2) > tol::kSpectral) {
    std::cerr << "warning: process_fidelity: ideal process is not rank 1\n";
  }
  const Complex f = (chi_ideal.chi() * chi.chi()).trace();
  return f.real();
}

double average_fidelity(const QubitMap& channel) {
  double sum = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for (double sign : {1.0, -1.0}) {
      Vector3 r = Vector3::Zero();
      r(axis) = sign;
      const Matrix2c rho = from_bloch_vector(r).matrix();
      sum += (rho * channel(rho)).trace().real();
    }
  }
  return sum / 6.0;
}

double average_fidelity(const ProcessMatrix& chi) {
  return average_fidelity([&](const Matrix2c& rho) { return chi.apply(rho); });
}

double avg_from_process_fidelity(double f_proc) {
  if (!(f_proc >= -tol::kSpectral && f_proc <= 1.0 + tol::kSpectral)) {
    throw std::invalid_argument("avg_from_process_fidelity: f_proc must lie in [0, 1]");
  }
  return (2.0 * f_proc + 1.0) / 3.0;
}

// ---------------------------------------------------------------------------
// Affine map

AffineMap affine_decompose(const ProcessMatrix& chi) {
  const auto& sigma = pauli_basis();
  AffineMap out;
  const Matrix2c image_of_identity = chi.apply(Matrix2c::Identity());
  for (int i = 0; i < 3; ++i) {
    out.b(i) = 0.5 * (sigma[i + 1] * image_of_identity).trace().real();
    for (int j = 0; j < 3; ++j) {
      out.M(i, j) = 0.5 * (sigma[i + 1] * chi.apply(sigma[j + 1])).trace().real();
    }
  }
  Eigen::JacobiSVD<Matrix3> svd(out.M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  out.O = u * v.transpose();
  out.S = v * svd.singularValues().asDiagonal() * v.transpose();
  out.S = 0.5 * (out.S + out.S.transpose()).eval();
  out.det_O = out.O.determinant();
  if (out.det_O > 0.0) {
    out.rotation_angle = std::acos(std::clamp((out.O.trace() - 1.0) / 2.0, -1.0, 1.0));
  } else {
    out.rotation_angle = std::numeric_limits<double>::quiet_NaN();
  }
  Eigen::SelfAdjointEigenSolver<Matrix3> es(out.S);
  out.s_eigenvalues = es.eigenvalues();
  return out;
}

Matrix2c affine_apply(const AffineMap& map, const Matrix2c& sigma) {
  const auto& p = pauli_basis();
  const Complex t = sigma.trace();
  Eigen::Vector3cd r;
  for (int i = 0; i < 3; ++i) r(i) = (p[i + 1] * sigma).trace();
  const Eigen::Vector3cd out = map.M.cast<Complex>() * r + t * map.b.cast<Complex>();
  Matrix2c m = t * Matrix2c::Identity();
  for (int i = 0; i < 3; ++i) m += out(i) * p[i + 1];
  return 0.5 * m;
}

std::vector<Vector3> ellipsoid_mesh(const AffineMap& map, int resolution) {
  using std::numbers::pi;
  if (resolution < 8) throw std::invalid_argument("ellipsoid_mesh: resolution must be >= 8");
  std::vector<Vector3> out;
  out.reserve(static_cast<std::size_t>(resolution + 1) * resolution);
  for (int k = 0; k <= resolution; ++k) {
    const double theta = pi * k / resolution;
    for (int l = 0; l < resolution; ++l) {
      const double phi = 2 * pi * l / resolution;
      const Vector3 r(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                      std::cos(theta));
      out.push_back(map.M * r + map.b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialisation

std::string counts_to_csv(const CountsTable& counts) {
  counts.validate();
  std::ostringstream os;
  os << "basis,outcome,count\n";
  for (const auto& row : counts.rows()) {
    os << protocol::basis_name(row.basis) << ',' << outcome_name(row.outcome) << ',';
    if (counts.expected) {
      os << std::setprecision(17) << row.count;
    } else {
      os << static_cast<std::uint64_t>(row.count);
    }
    os << '\n';
  }
  return os.str();
}

CountsTable counts_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "basis,outcome,count") {
    throw std::invalid_argument("counts CSV: missing header 'basis,outcome,count'");
  }
  CountsTable out;
  out.expected = false;
  int n = 0;
  for (Basis b : kBases) {
    for (Outcome o : {Outcome::Bright, Outcome::Dark}) {
      if (!std::getline(is, line)) throw std::invalid_argument("counts CSV: expected 6 rows");
      const std::string prefix = std::string(protocol::basis_name(b)) + "," + outcome_name(o) + ",";
      if (line.rfind(prefix, 0) != 0) {
        throw std::invalid_argument("counts CSV: row " + std::to_string(n + 2) +
                                    " must start with '" + prefix + "'");
      }
      const std::string value = line.substr(prefix.size());
      std::size_t used = 0;
      const double c = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("counts CSV: bad count '" + value + "'");
      if (value.find_first_of(".eE") != std::string::npos) out.expected = true;
      out.at(b, o) = c;
      ++n;
    }
  }
  out.total_per_basis = out.at(Basis::Z, Outcome::Bright) + out.at(Basis::Z, Outcome::Dark);
  if (out.expected) out.total_per_basis = 1.0;
  out.validate();
  return out;
}

std::string matrix_to_json(const ComplexMatrix& m) {
  if (!all_finite(m)) throw InvariantViolation("matrix_to_json: non-finite entry");
  if (m.rows() != m.cols()) throw DimensionError("matrix_to_json: square matrix required");
  nlohmann::ordered_json j;
  j["dim"] = m.rows();
  auto re = nlohmann::ordered_json::array();
  auto im = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      re.push_back(m(r, c).real());
      im.push_back(m(r, c).imag());
    }
  }
  j["real"] = std::move(re);
  j["imag"] = std::move(im);
  return j.dump(2) + "\n";
}

ComplexMatrix matrix_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto rows = j.at("dim").get<Eigen::Index>();
  const auto cols = rows;
  const auto& re = j.at("real");
  const auto& im = j.at("imag");
  if (rows < 1 || cols < 1 || re.size() != static_cast<std::size_t>(rows * cols) ||
      im.size() != re.size()) {
    throw std::invalid_argument("matrix JSON: real/imag arrays must hold dim*dim entries");
  }
  ComplexMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto k = static_cast<std::size_t>(r * cols + c);
      m(r, c) = Complex(re[k].get<double>(), im[k].get<double>());
    }
  }
  return m;
}

std::string affine_to_json(const AffineMap& map) {
  auto mat = [](const Matrix3& m) {
    auto a = nlohmann::ordered_json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
    }
    return a;
  };
  auto vec = [](const Vector3& v) { return nlohmann::ordered_json::array({v(0), v(1), v(2)}); };
  nlohmann::ordered_json j;
  j["M"] = mat(map.M);
  j["O"] = mat(map.O);
  j["S"] = mat(map.S);
  j["b"] = vec(map.b);
  j["det_O"] = map.det_O;
  if (std::isnan(map.rotation_angle)) {
    j["rotation_angle_rad"] = nullptr;
  } else {
    j["rotation_angle_rad"] = map.rotation_angle;
  }
  j["S_eigenvalues"] = vec(map.s_eigenvalues);
  return j.dump(2) + "\n";
}

}  // namespace iontele::tomo
