#include "chainbell/qstate.hpp"

#include <cmath>
#include <sstream>

#include "chainbell/error.hpp"

namespace chainbell {

namespace {

using cd = std::complex<double>;

constexpr double kHermitianTol = 1e-12;
constexpr double kTraceTol = 1e-12;
constexpr double kPositiveTol = 1e-10;

Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
  Matrix4c out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) out(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
  return out;
}

std::string magnitude(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

const std::array<Matrix2c, 3>& pauli() {
  static const std::array<Matrix2c, 3> kPauli = [] {
    std::array<Matrix2c, 3> p;
    p[0] << 0, 1, 1, 0;
    p[1] << 0, cd(0, -1), cd(0, 1), 0;
    p[2] << 1, 0, 0, -1;
    return p;
  }();
  return kPauli;
}

TwoQubitState validate_state(const Matrix4c& rho) {
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > kHermitianTol)
    throw Error(ErrorCode::NotHermitian, "max |rho - rho^dagger| = " + magnitude(herm));

  const double trace_err = std::abs(rho.trace() - cd(1.0, 0.0));
  if (trace_err > kTraceTol)
    throw Error(ErrorCode::TraceNotOne, "|tr(rho) - 1| = " + magnitude(trace_err));

  // Symmetrize before the eigen solve so round-off in the imaginary
  // diagonal does not leak into the eigenvalues.
  const Matrix4c herm_part = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(herm_part, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -kPositiveTol)
    throw Error(ErrorCode::NotPositive, "min eigenvalue = " + magnitude(min_eig));

  return TwoQubitState(rho);
}

BlochForm bloch_decompose(const TwoQubitState& state) {
  const auto& sigma = pauli();
  const Matrix2c id = Matrix2c::Identity();
  const Matrix4c& rho = state.rho();
  BlochForm b;
  for (int k = 0; k < 3; ++k) {
    b.r(k) = (rho * kron(sigma[k], id)).trace().real();
    b.s(k) = (rho * kron(id, sigma[k])).trace().real();
    for (int l = 0; l < 3; ++l) b.m(k, l) = (rho * kron(sigma[k], sigma[l])).trace().real();
  }
  return b;
}

TwoQubitState bloch_compose(const BlochForm& b) {
  const auto& sigma = pauli();
  const Matrix2c id = Matrix2c::Identity();
  Matrix4c rho = kron(id, id);
  for (int k = 0; k < 3; ++k) {
    rho += b.r(k) * kron(sigma[k], id);
    rho += b.s(k) * kron(id, sigma[k]);
    for (int l = 0; l < 3; ++l) rho += b.m(k, l) * kron(sigma[k], sigma[l]);
  }
  return validate_state(0.25 * rho);
}

SvdReport correlation_svd(const BlochForm& b, double rel_tol) {
  if (!(rel_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "rel_tol must be positive");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(b.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdReport rep;
  rep.singular_values = svd.singularValues();
  rep.left_vectors = svd.matrixU();
  rep.right_vectors = svd.matrixV();
  rep.sigma_max = rep.singular_values(0);
  const double scale = std::max(rep.sigma_max, 1e-300);
  for (int i = 0; i < 3; ++i)
    if ((rep.sigma_max - rep.singular_values(i)) / scale <= rel_tol) ++rep.degeneracy;
  return rep;
}

RayleighBound rayleigh_singular_bound(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& y) {
  if (a.rows() != x.size() || a.cols() != y.size())
    throw Error(ErrorCode::DimensionMismatch, "A is " + std::to_string(a.rows()) + "x" +
                                                  std::to_string(a.cols()) + ", x has " +
                                                  std::to_string(x.size()) + ", y has " +
                                                  std::to_string(y.size()));
  RayleighBound out;
  out.lhs = std::abs(x.dot(a * y));
  const double sigma = a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
  out.rhs = sigma * x.norm() * y.norm();
  out.holds = out.lhs <= out.rhs + 1e-10;
  return out;
}

TwoQubitState make_maximally_mixed() { return validate_state(Matrix4c::Identity() / 4.0); }

TwoQubitState make_singlet() {
  Eigen::Matrix<cd, 4, 1> psi;
  psi << 0, 1, -1, 0;
  psi /= std::sqrt(2.0);
  return validate_state(psi * psi.adjoint());
}

TwoQubitState make_werner(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "Werner visibility must lie in [0, 1], got " + magnitude(p));
  return validate_state(p * make_singlet().rho() + (1.0 - p) * Matrix4c::Identity() / 4.0);
}

TwoQubitState make_xstate(double nu, double l) {
  BlochForm b;
  b.m << 0, nu, 0, nu, 0, 0, 0, 0, l;
  return bloch_compose(b);
}

TwoQubitState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  Eigen::Matrix<cd, 4, 1> psi;
  for (int i = 0; i < 4; ++i) psi(i) = cd(gauss(rng), gauss(rng));
  psi.normalize();
  const double w = unif(rng);
  Matrix4c rho = w * psi * psi.adjoint() + (1.0 - w) * Matrix4c::Identity() / 4.0;
  // The outer product is Hermitian only up to round-off.
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return validate_state(rho);
}

}  // namespace chainbell
