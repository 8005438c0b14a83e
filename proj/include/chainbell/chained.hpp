#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chainbell/qstate.hpp"
#include "chainbell/sdp.hpp"

namespace chainbell {

// Settings are 0-based throughout the library: the chained pair the
// literature calls A_1 B_1 is (0, 0) here.

/// Unit Bloch vectors defining the +-1 observables A_x = a_x . sigma and B_y = b_y . sigma.
class MeasurementSet {
 public:
  /// Throws InvalidArgument if any vector is off the unit sphere by more than 1e-12.
  MeasurementSet(std::vector<Eigen::Vector3d> alice, std::vector<Eigen::Vector3d> bob);

  int n_a() const noexcept { return static_cast<int>(alice_.size()); }
  int n_b() const noexcept { return static_cast<int>(bob_.size()); }
  const std::vector<Eigen::Vector3d>& alice() const noexcept { return alice_; }
  const std::vector<Eigen::Vector3d>& bob() const noexcept { return bob_; }

 private:
  std::vector<Eigen::Vector3d> alice_;
  std::vector<Eigen::Vector3d> bob_;
};

/// Outcome +1 maps to table index 0 and -1 to index 1.
inline constexpr int outcome_index(int outcome) noexcept { return outcome > 0 ? 0 : 1; }

/// Joint probability table p(ab|xy), a, b in {+1, -1}.
class Behavior {
 public:
  Behavior(int n_a, int n_b);

  int n_a() const noexcept { return n_a_; }
  int n_b() const noexcept { return n_b_; }

  double p(int x, int y, int a, int b) const { return table_[index(x, y, a, b)]; }
  void set(int x, int y, int a, int b, double value) { table_[index(x, y, a, b)] = value; }

  double alice_marginal(int x, int a) const;  // computed with y = 0
  double bob_marginal(int y, int b) const;    // computed with x = 0
  /// <A_x B_y> = sum_ab a b p(ab|xy).
  double correlator(int x, int y) const;

  const std::vector<double>& table() const noexcept { return table_; }

 private:
  std::size_t index(int x, int y, int a, int b) const {
    return ((static_cast<std::size_t>(x) * n_b_ + y) * 2 + outcome_index(a)) * 2 + outcome_index(b);
  }

  int n_a_;
  int n_b_;
  std::vector<double> table_;
};

/// Throws NegativeProbability, NotNormalized or Signaling, naming the worst violation.
void check_behavior(const Behavior& beh, double tol = 1e-10);

/// Weights of <A_x B_y> in a correlation Bell expression.
struct BellCoefficients {
  Eigen::MatrixXd weights;  // n_a x n_b

  int n_a() const noexcept { return static_cast<int>(weights.rows()); }
  int n_b() const noexcept { return static_cast<int>(weights.cols()); }
};

/// sum_k <A_k B_k> + sum_k <A_{k+1} B_k> - <A_1 B_n> (1-based), i.e. weight
/// +1 on the diagonal and first subdiagonal and -1 in the top-right corner.
/// `transposed` swaps the party roles.
BellCoefficients chained_coefficients(int n, bool transposed = false);

/// J_gamma = <A0B0> + c (<A0B1> + <A1B0> - <A1B1>), c = 4 cos^2(gamma + pi/6) - 1,
/// for gamma in [0, pi/12].
BellCoefficients j_gamma_coefficients(double gamma);

double classical_bound(int n);
double tsirelson_bound(int n);
/// 2n cos(pi/2n) sigma_max(M). Zero correlation matrix gives exactly 0.
double theorem1_bound(const BlochForm& b, int n);

struct TightnessReport {
  bool sufficient = false;
  std::string reason;
  std::optional<MeasurementSet> witness;
};

/// Sufficient tightness condition: sigma_max has multiplicity >= 2. When it
/// holds, the witness carries measurements attaining theorem1_bound.
/// Throws DegenerateCorrelation when sigma_max <= 1e-12.
TightnessReport tightness_check(const BlochForm& b, int n, double rel_tol = kDefaultDegeneracyTol);

MeasurementSet canonical_measurements(int n);

double correlator(const BlochForm& b, const Eigen::Vector3d& a, const Eigen::Vector3d& bv);
double alice_expectation(const BlochForm& b, const Eigen::Vector3d& a);
double bob_expectation(const BlochForm& b, const Eigen::Vector3d& bv);

double bell_value(const BlochForm& b, const MeasurementSet& ms, const BellCoefficients& coeffs);
double bell_value(const Behavior& beh, const BellCoefficients& coeffs);

Behavior behavior_from_state(const BlochForm& b, const MeasurementSet& ms);

/// Entrywise p q + (1 - p)/4.
Behavior noisy_behavior(const Behavior& q, double p);

/// maximize 1/2 tr(W G) s.t. G >= 0, G_ii = 1, with W the chain adjacency
/// (+1 between neighbours, -1 closing the cycle).
SdpProblem gram_sdp_problem(int n);

struct GramResult {
  double primal = 0.0;
  double dual = 0.0;
  Eigen::MatrixXd gram;
  Eigen::VectorXd multipliers;  // the diagonal dual v
  SolverStatus status = SolverStatus::NumericalTrouble;
  double gap = 0.0;
};

/// Throws SolverFailure when the solver does not report Optimal.
GramResult solve_gram_sdp(int n, SdpSolver& solver);

/// Werner visibility above which the n-setting chained inequality is violated.
double werner_witness_threshold(int n);

bool xstate_entangled(double nu, double l);

}  // namespace chainbell
