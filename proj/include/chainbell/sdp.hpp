#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chainbell {

enum class Sense { Minimize, Maximize };

enum class SolverStatus { Optimal, MaxIter, NumericalTrouble };

const char* to_string(SolverStatus status);

/// Sparse symmetric block-diagonal matrix. An off-diagonal entry (r, c, v)
/// stands for v at both (r, c) and (c, r); repeated entries add up.
class SymBlockMatrix {
 public:
  struct Entry {
    int block;
    int row;
    int col;
    double value;
  };

  void add(int block, int row, int col, double value);
  /// Copies the upper triangle of a dense block; throws InvalidArgument if
  /// the block is not symmetric within 1e-12.
  void add_dense(int block, const Eigen::MatrixXd& m);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  std::vector<Eigen::MatrixXd> to_dense(const std::vector<int>& block_dims) const;

 private:
  std::vector<Entry> entries_;
};

/// Standard-form conic program over block-diagonal X >= 0:
///   optimize tr(C X)  s.t.  tr(A_i X) = b_i.
/// The paired dual is optimize b^T y s.t. Z = C - sum_i y_i A_i >= 0 (with
/// the inequality on Z flipped for maximization).
struct SdpProblem {
  struct Constraint {
    SymBlockMatrix a;
    double b = 0.0;
  };

  std::vector<int> block_dims;
  SymBlockMatrix objective;
  std::vector<Constraint> constraints;
  Sense sense = Sense::Minimize;

  /// Block dims >= 1, indices in range, constraint count not above the
  /// number of free matrix entries. Throws DimensionMismatch / InvalidArgument.
  void validate() const;
};

struct SdpOptions {
  double tol_gap = 1e-7;
  double tol_feas = 1e-8;
  int max_iter = 200;
  double step_fraction = 0.98;
  /// Stop early (status MaxIter) once a dual-feasible iterate proves the
  /// optimum lies beyond this value: above it when minimizing, below when maximizing.
  double dual_target = std::numeric_limits<double>::infinity();
  /// When non-empty, a readable listing of the problem is written here before solving.
  std::string dump_path;
};

struct IterationLog {
  double primal_value;
  double dual_value;
  double primal_infeas;  // max_i |tr(A_i X) - b_i|
  double dual_infeas;    // max |C - Z - sum y_i A_i|
  double mu;
  double step_primal;
  double step_dual;
};

struct SdpSolution {
  std::vector<Eigen::MatrixXd> x;
  Eigen::VectorXd y;
  std::vector<Eigen::MatrixXd> z;
  // Values in the problem's own sense. For maximization primal <= dual at optimum.
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;  // |primal - dual|
  SolverStatus status = SolverStatus::NumericalTrouble;
  int iterations = 0;
  std::vector<IterationLog> history;
};

struct ResidualReport {
  double max_equality_residual = 0.0;
  double max_dual_residual = 0.0;
  double min_eig_x = 0.0;
  double min_eig_z = 0.0;
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;

  /// The residual bounds an Optimal status promises.
  bool certifies_optimal() const;
};

/// Infeasible-start primal-dual interior point method (HKM direction,
/// Mehrotra predictor-corrector).
SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts = {});

/// Recomputes every residual from (X, y, Z) without touching solver state.
ResidualReport feasibility_certificate(const SdpSolution& sol, const SdpProblem& problem);

void dump_problem(std::ostream& os, const SdpProblem& problem);

namespace detail {
SdpSolution solve_with_workspace(const SdpProblem& problem, const SdpOptions& opts,
                                 Eigen::MatrixXd& schur);
}  // namespace detail

/// Solver handle owning its options and Schur workspace. Not thread-safe;
/// use one per thread.
class SdpSolver {
 public:
  explicit SdpSolver(SdpOptions opts = {}) : opts_(std::move(opts)) {}

  SdpSolution solve(const SdpProblem& problem);

  const SdpOptions& options() const noexcept { return opts_; }
  SdpOptions& options() noexcept { return opts_; }
  int solves() const noexcept { return solves_; }

 private:
  SdpOptions opts_;
  Eigen::MatrixXd schur_;
  int solves_ = 0;
};

}  // namespace chainbell
