#pragma once

#include <array>
#include <complex>
#include <random>

#include <Eigen/Dense>

namespace chainbell {

using Matrix4c = Eigen::Matrix<std::complex<double>, 4, 4>;
using Matrix2c = Eigen::Matrix<std::complex<double>, 2, 2>;

/// The three Pauli matrices sigma_x, sigma_y, sigma_z (index 0..2).
const std::array<Matrix2c, 3>& pauli();

/// Validated two-qubit density matrix. Only constructible through
/// validate_state() and the named constructors, so holding one means the
/// Hermiticity, unit-trace and positivity checks have passed.
class TwoQubitState {
 public:
  const Matrix4c& rho() const noexcept { return rho_; }

 private:
  explicit TwoQubitState(const Matrix4c& rho) : rho_(rho) {}
  friend TwoQubitState validate_state(const Matrix4c& rho);

  Matrix4c rho_;
};

/// Bloch form rho = 1/4 [I + r.sigma x I + I x s.sigma + sum m_kl sigma_k x sigma_l].
/// Not re-validated: the bound machinery only needs M, and synthetic
/// correlation matrices are legitimate inputs there.
struct BlochForm {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
};

struct SvdReport {
  Eigen::Vector3d singular_values;  // descending, nonnegative
  double sigma_max = 0.0;
  int degeneracy = 0;
  Eigen::Matrix3d left_vectors;   // columns; signs of M live here
  Eigen::Matrix3d right_vectors;  // columns
};

struct RayleighBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

inline constexpr double kDefaultDegeneracyTol = 1e-8;

// Throws NotHermitian, TraceNotOne or NotPositive with the offending magnitude.
TwoQubitState validate_state(const Matrix4c& rho);

BlochForm bloch_decompose(const TwoQubitState& state);

// Throws NotPositive when (r, s, M) is not a physical state.
TwoQubitState bloch_compose(const BlochForm& b);

SvdReport correlation_svd(const BlochForm& b, double rel_tol = kDefaultDegeneracyTol);

/// |x^T A y| against sigma_max(A) |x| |y|. Throws DimensionMismatch.
RayleighBound rayleigh_singular_bound(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& y);

TwoQubitState make_maximally_mixed();
TwoQubitState make_singlet();
/// p |psi-><psi-| + (1 - p) I/4, 0 <= p <= 1.
TwoQubitState make_werner(double p);
/// 1/4 [I + nu (XY + YX) + l ZZ]; throws NotPositive outside 1 + l - 2 nu >= 0, |l| <= 1.
TwoQubitState make_xstate(double nu, double l);

/// Haar-random pure state mixed with I/4 at a uniformly random weight.
TwoQubitState random_state(std::mt19937_64& rng);

}  // namespace chainbell
