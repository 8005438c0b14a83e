#include "chainbell/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include "chainbell/error.hpp"

namespace chainbell {

const char* to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::Optimal: return "Optimal";
    case SolverStatus::MaxIter: return "MaxIter";
    case SolverStatus::NumericalTrouble: return "NumericalTrouble";
  }
  return "Unknown";
}

void SymBlockMatrix::add(int block, int row, int col, double value) {
  if (row > col) std::swap(row, col);
  entries_.push_back({block, row, col, value});
}

void SymBlockMatrix::add_dense(int block, const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "dense block must be square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "dense block is not symmetric");
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r <= c; ++r)
      if (m(r, c) != 0.0) add(block, r, c, m(r, c));
}

std::vector<Eigen::MatrixXd> SymBlockMatrix::to_dense(const std::vector<int>& block_dims) const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(block_dims.size());
  for (int d : block_dims) out.push_back(Eigen::MatrixXd::Zero(d, d));
  for (const auto& e : entries_) {
    out[e.block](e.row, e.col) += e.value;
    if (e.row != e.col) out[e.block](e.col, e.row) += e.value;
  }
  return out;
}

void SdpProblem::validate() const {
  if (block_dims.empty()) throw Error(ErrorCode::InvalidArgument, "problem has no blocks");
  long free_entries = 0;
  for (int d : block_dims) {
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "block dimension must be >= 1");
    free_entries += static_cast<long>(d) * (d + 1) / 2;
  }
  auto check = [&](const SymBlockMatrix& m, const char* what) {
    for (const auto& e : m.entries()) {
      if (e.block < 0 || e.block >= static_cast<int>(block_dims.size()))
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " references a missing block");
      const int d = block_dims[e.block];
      if (e.row < 0 || e.col >= d)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " entry outside its block");
      if (!std::isfinite(e.value))
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " has a non-finite entry");
    }
  };
  check(objective, "objective");
  for (const auto& c : constraints) {
    check(c.a, "constraint");
    if (!std::isfinite(c.b)) throw Error(ErrorCode::InvalidArgument, "non-finite right-hand side");
  }
  if (static_cast<long>(constraints.size()) > free_entries)
    throw Error(ErrorCode::InvalidArgument,
                std::to_string(constraints.size()) + " constraints exceed the " +
                    std::to_string(free_entries) + " free entries of X");
}

bool ResidualReport::certifies_optimal() const {
  return min_eig_x >= -1e-8 && min_eig_z >= -1e-8 && max_equality_residual <= 1e-7 &&
         std::abs(gap) <= 1e-6 * (1.0 + std::abs(primal_value));
}

namespace {

using Blocks = std::vector<Eigen::MatrixXd>;

struct Term {
  int row;
  int col;
  double value;
};

// A_i expanded to both triangles, grouped by block.
struct CompiledConstraint {
  std::vector<std::pair<int, std::vector<Term>>> blocks;
  double b;
};

std::vector<CompiledConstraint> compile(const SdpProblem& p) {
  std::vector<CompiledConstraint> out;
  out.reserve(p.constraints.size());
  for (const auto& c : p.constraints) {
    CompiledConstraint cc;
    cc.b = c.b;
    // Densify per touched block so duplicate entries merge.
    std::vector<int> touched;
    for (const auto& e : c.a.entries())
      if (std::find(touched.begin(), touched.end(), e.block) == touched.end()) touched.push_back(e.block);
    std::sort(touched.begin(), touched.end());
    for (int blk : touched) {
      const int d = p.block_dims[blk];
      Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(d, d);
      for (const auto& e : c.a.entries()) {
        if (e.block != blk) continue;
        dense(e.row, e.col) += e.value;
        if (e.row != e.col) dense(e.col, e.row) += e.value;
      }
      std::vector<Term> terms;
      for (int col = 0; col < d; ++col)
        for (int row = 0; row < d; ++row)
          if (dense(row, col) != 0.0) terms.push_back({row, col, dense(row, col)});
      if (!terms.empty()) cc.blocks.emplace_back(blk, std::move(terms));
    }
    out.push_back(std::move(cc));
  }
  return out;
}

double trace_product(const Blocks& a, const Blocks& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k].transpose()).sum();
  return s;
}

// tr(A_i K) for every constraint; K need not be symmetric.
Eigen::VectorXd apply_constraints(const std::vector<CompiledConstraint>& cons, const Blocks& k) {
  Eigen::VectorXd out(cons.size());
  for (std::size_t i = 0; i < cons.size(); ++i) {
    double s = 0.0;
    for (const auto& [blk, terms] : cons[i].blocks)
      for (const auto& t : terms) s += t.value * k[blk](t.col, t.row);
    out(i) = s;
  }
  return out;
}

Blocks adjoint(const std::vector<CompiledConstraint>& cons, const Eigen::VectorXd& y,
               const std::vector<int>& dims) {
  Blocks out;
  for (int d : dims) out.push_back(Eigen::MatrixXd::Zero(d, d));
  for (std::size_t i = 0; i < cons.size(); ++i) {
    if (y(i) == 0.0) continue;
    for (const auto& [blk, terms] : cons[i].blocks)
      for (const auto& t : terms) out[blk](t.row, t.col) += y(i) * t.value;
  }
  return out;
}

double max_abs(const Blocks& b) {
  double m = 0.0;
  for (const auto& x : b)
    if (x.size() > 0) m = std::max(m, x.cwiseAbs().maxCoeff());
  return m;
}

double min_eigenvalue(const Blocks& b) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (x + x.transpose()), Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  return m;
}

// Largest alpha in (0, inf] keeping X + alpha dX positive semidefinite.
double max_step(const Blocks& x, const Blocks& dx) {
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(x[k]);
    if (llt.info() != Eigen::Success) return 0.0;
    Eigen::MatrixXd w = llt.matrixL().solve(dx[k]);
    w = llt.matrixL().solve(w.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  return alpha;
}

Blocks symmetrized(Blocks b) {
  for (auto& x : b) x = 0.5 * (x + x.transpose()).eval();
  return b;
}

struct Iterate {
  Blocks x;
  Eigen::VectorXd y;
  Blocks z;
};

}  // namespace

namespace detail {

SdpSolution solve_with_workspace(const SdpProblem& problem, const SdpOptions& opts,
                                 Eigen::MatrixXd& schur) {
  problem.validate();
  if (!opts.dump_path.empty()) {
    std::ofstream os(opts.dump_path);
    dump_problem(os, problem);
  }

  const auto& dims = problem.block_dims;
  const auto cons = compile(problem);
  const int m = static_cast<int>(cons.size());
  const int nblocks = static_cast<int>(dims.size());
  int total_dim = 0;
  for (int d : dims) total_dim += d;

  // Internally always minimize.
  const double sense_sign = problem.sense == Sense::Maximize ? -1.0 : 1.0;
  Blocks c = problem.objective.to_dense(dims);
  for (auto& blk : c) blk *= sense_sign;

  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) b(i) = cons[i].b;

  // Constraint lists per block for the Schur complement.
  std::vector<std::vector<std::pair<int, const std::vector<Term>*>>> by_block(nblocks);
  for (int i = 0; i < m; ++i)
    for (const auto& [blk, terms] : cons[i].blocks) by_block[blk].emplace_back(i, &terms);

  // Blocks whose constraint matrices are mostly dense go through GEMM;
  // row i of dense_a[k] is vec(A_i) restricted to block k.
  std::vector<bool> dense_block(nblocks, false);
  std::vector<Eigen::MatrixXd> dense_a(nblocks);
  for (int k = 0; k < nblocks; ++k) {
    const int d = dims[k];
    long nnz = 0;
    for (const auto& [i, terms] : by_block[k]) nnz += static_cast<long>(terms->size());
    if (by_block[k].empty() || nnz <= static_cast<long>(by_block[k].size()) * 2 * d) continue;
    dense_block[k] = true;
    dense_a[k] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(by_block[k].size()), d * d);
    for (std::size_t li = 0; li < by_block[k].size(); ++li)
      for (const auto& t : *by_block[k][li].second) dense_a[k](static_cast<Eigen::Index>(li), t.row + t.col * d) = t.value;
  }

  double tau = 1.0;
  {
    double max_b = b.size() > 0 ? b.cwiseAbs().maxCoeff() : 0.0;
    double max_a = 0.0;
    for (const auto& cc : cons) {
      double fro = 0.0;
      for (const auto& [blk, terms] : cc.blocks)
        for (const auto& t : terms) fro += t.value * t.value;
      max_a = std::max(max_a, std::sqrt(fro));
    }
    tau = 1.0 + max_b + max_a;
  }

  Iterate it;
  for (int d : dims) {
    it.x.push_back(tau * Eigen::MatrixXd::Identity(d, d));
    it.z.push_back(tau * Eigen::MatrixXd::Identity(d, d));
  }
  it.y = Eigen::VectorXd::Zero(m);

  const double b_scale = 1.0 + (m > 0 ? b.cwiseAbs().maxCoeff() : 0.0);
  const double c_scale = 1.0 + max_abs(c);

  SdpSolution sol;
  auto finish = [&](const Iterate& best, SolverStatus status, int iters) {
    sol.x = best.x;
    sol.y = best.y;
    sol.z = best.z;
    const double pobj = trace_product(c, best.x);
    const double dobj = b.dot(best.y);
    sol.primal_value = sense_sign * pobj;
    sol.dual_value = sense_sign * dobj;
    sol.gap = std::abs(pobj - dobj);
    sol.status = status;
    sol.iterations = iters;
    return sol;
  };

  Iterate best = it;
  double best_merit = std::numeric_limits<double>::infinity();
  int stalled = 0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // Residuals.
    const Eigen::VectorXd rp = b - apply_constraints(cons, it.x);
    Blocks rd = c;
    {
      const Blocks ay = adjoint(cons, it.y, dims);
      for (int k = 0; k < nblocks; ++k) rd[k] -= it.z[k] + ay[k];
    }
    const double pobj = trace_product(c, it.x);
    const double dobj = b.dot(it.y);
    const double pinf = m > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
    const double dinf = max_abs(rd);
    const double mu = trace_product(it.x, it.z) / total_dim;
    const double gap = std::abs(pobj - dobj);

    IterationLog log{sense_sign * pobj, sense_sign * dobj, pinf, dinf, mu, 0.0, 0.0};

    const double merit = std::max({gap / (1.0 + std::abs(pobj)), pinf / b_scale, dinf / c_scale});
    if (merit < best_merit) {
      best_merit = merit;
      best = it;
    }
    if (gap <= opts.tol_gap * (1.0 + std::abs(pobj)) && pinf <= opts.tol_feas * b_scale &&
        dinf <= opts.tol_feas * c_scale) {
      sol.history.push_back(log);
      return finish(it, SolverStatus::Optimal, iter);
    }
    // The dual objective bounds the optimum: below when minimizing, above when maximizing.
    const bool past_target = problem.sense == Sense::Minimize ? dobj > opts.dual_target
                                                              : -dobj < opts.dual_target;
    if (std::isfinite(opts.dual_target) && dinf <= opts.tol_feas * c_scale && past_target) {
      sol.history.push_back(log);
      return finish(it, SolverStatus::MaxIter, iter);
    }

    Blocks zinv(nblocks);
    bool factor_ok = true;
    for (int k = 0; k < nblocks; ++k) {
      Eigen::LLT<Eigen::MatrixXd> llt(it.z[k]);
      if (llt.info() != Eigen::Success) {
        factor_ok = false;
        break;
      }
      zinv[k] = llt.solve(Eigen::MatrixXd::Identity(dims[k], dims[k]));
      zinv[k] = 0.5 * (zinv[k] + zinv[k].transpose()).eval();
    }
    if (!factor_ok) {
      sol.history.push_back(log);
      return finish(best, SolverStatus::NumericalTrouble, iter);
    }

    // Schur complement M_ij = tr(A_i X A_j Z^-1).
    schur.setZero(m, m);
    for (int k = 0; k < nblocks; ++k) {
      if (!dense_block[k]) continue;
      const int d = dims[k];
      const auto& list = by_block[k];
      Eigen::MatrixXd bt(static_cast<Eigen::Index>(list.size()), d * d);
      Eigen::VectorXd row(d * d);
      Eigen::MatrixXd ai(d, d), prod(d, d);
      for (std::size_t li = 0; li < list.size(); ++li) {
        row = dense_a[k].row(static_cast<Eigen::Index>(li)).transpose();
        ai = Eigen::Map<const Eigen::MatrixXd>(row.data(), d, d);
        prod.noalias() = it.x[k] * ai;
        ai.noalias() = prod * zinv[k];
        bt.row(static_cast<Eigen::Index>(li)) = Eigen::Map<const Eigen::RowVectorXd>(ai.data(), d * d);
      }
      const Eigen::MatrixXd local = dense_a[k] * bt.transpose();
      for (std::size_t li = 0; li < list.size(); ++li)
        for (std::size_t lj = li; lj < list.size(); ++lj) {
          const int i = list[li].first, j = list[lj].first;
          schur(std::min(i, j), std::max(i, j)) += local(static_cast<Eigen::Index>(lj), static_cast<Eigen::Index>(li));
        }
    }
    for (int i = 0; i < m; ++i) {
      for (const auto& [blk, terms] : cons[i].blocks) {
        if (dense_block[blk]) continue;
        const int d = dims[blk];
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d, d);  // Z^-1 A_i X
        for (const auto& t : terms) q.noalias() += t.value * zinv[blk].col(t.row) * it.x[blk].row(t.col);
        for (const auto& [j, jterms] : by_block[blk]) {
          if (j < i) continue;
          double s = 0.0;
          for (const auto& t : *jterms) s += t.value * q(t.col, t.row);
          schur(i, j) += s;
        }
      }
    }
    schur.triangularView<Eigen::StrictlyLower>() = schur.transpose().triangularView<Eigen::StrictlyLower>();

    Eigen::LLT<Eigen::MatrixXd> schur_llt;
    double schur_reg = 0.0;
    {
      const double diag_scale = m > 0 ? std::max(1.0, schur.diagonal().cwiseAbs().maxCoeff()) : 1.0;
      const Eigen::VectorXd diag = schur.diagonal();
      for (double reg : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
        schur_reg = reg * diag_scale;
        schur.diagonal() = diag.array() + schur_reg;
        schur_llt.compute(schur);
        if (schur_llt.info() == Eigen::Success) break;
      }
      schur.diagonal() = diag;
      if (schur_llt.info() != Eigen::Success) {
        sol.history.push_back(log);
        return finish(best, SolverStatus::NumericalTrouble, iter);
      }
    }
    // Iterative refinement against the unregularized system.
    auto schur_solve = [&](const Eigen::VectorXd& rhs) {
      Eigen::VectorXd v = schur_llt.solve(rhs);
      const double rhs_norm = std::max(rhs.norm(), 1e-300);
      for (int pass = 0; pass < 3; ++pass) {
        const Eigen::VectorXd r = rhs - schur.selfadjointView<Eigen::Lower>() * v;
        if (r.norm() <= 1e-15 * rhs_norm) break;
        v += schur_llt.solve(r);
      }
      return v;
    };

    // X Rd Z^-1 is shared by predictor and corrector.
    Blocks x_rd_zinv(nblocks);
    for (int k = 0; k < nblocks; ++k) x_rd_zinv[k] = it.x[k] * rd[k] * zinv[k];

    auto direction = [&](double sigma_mu, const Blocks* second_order, Blocks& dx, Eigen::VectorXd& dy,
                         Blocks& dz) {
      // G = sigma mu Z^-1 - X - K Z^-1 - X Rd Z^-1.
      Blocks g(nblocks);
      for (int k = 0; k < nblocks; ++k) {
        g[k] = sigma_mu * zinv[k] - it.x[k] - x_rd_zinv[k];
        if (second_order) g[k] -= (*second_order)[k] * zinv[k];
      }
      const Eigen::VectorXd rhs = rp - apply_constraints(cons, g);
      dy = schur_solve(rhs);
      const Blocks ady = adjoint(cons, dy, dims);
      dz.resize(nblocks);
      dx.resize(nblocks);
      for (int k = 0; k < nblocks; ++k) {
        dz[k] = rd[k] - ady[k];
        dx[k] = g[k] + it.x[k] * ady[k] * zinv[k];
      }
      dx = symmetrized(std::move(dx));
    };

    Blocks dx, dz;
    Eigen::VectorXd dy;
    direction(0.0, nullptr, dx, dy, dz);
    double ap = std::min(1.0, opts.step_fraction * max_step(it.x, dx));
    double ad = std::min(1.0, opts.step_fraction * max_step(it.z, dz));

    double mu_aff = 0.0;
    {
      Blocks xa(nblocks), za(nblocks);
      for (int k = 0; k < nblocks; ++k) {
        xa[k] = it.x[k] + ap * dx[k];
        za[k] = it.z[k] + ad * dz[k];
      }
      mu_aff = trace_product(xa, za) / total_dim;
    }
    double sigma = mu > 0.0 ? std::pow(std::max(mu_aff, 0.0) / mu, 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    Blocks second(nblocks);
    for (int k = 0; k < nblocks; ++k) second[k] = dx[k] * dz[k];
    direction(sigma * mu, &second, dx, dy, dz);
    ap = std::min(1.0, opts.step_fraction * max_step(it.x, dx));
    ad = std::min(1.0, opts.step_fraction * max_step(it.z, dz));
    log.step_primal = ap;
    log.step_dual = ad;
    sol.history.push_back(log);

    for (int k = 0; k < nblocks; ++k) {
      it.x[k] += ap * dx[k];
      it.z[k] += ad * dz[k];
      it.x[k] = 0.5 * (it.x[k] + it.x[k].transpose()).eval();
      it.z[k] = 0.5 * (it.z[k] + it.z[k].transpose()).eval();
    }
    it.y += ad * dy;

    stalled = std::min(ap, ad) < 1e-4 ? stalled + 1 : 0;
    if (stalled >= 6) return finish(best, SolverStatus::NumericalTrouble, iter + 1);
  }

  // One last look at the final iterate.
  {
    const Eigen::VectorXd rp = b - apply_constraints(cons, it.x);
    Blocks rd = c;
    const Blocks ay = adjoint(cons, it.y, dims);
    for (int k = 0; k < nblocks; ++k) rd[k] -= it.z[k] + ay[k];
    const double pobj = trace_product(c, it.x);
    const double gap = std::abs(pobj - b.dot(it.y));
    const double pinf = m > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
    const double merit = std::max({gap / (1.0 + std::abs(pobj)), pinf / b_scale, max_abs(rd) / c_scale});
    if (merit < best_merit) best = it;
  }
  return finish(best, SolverStatus::MaxIter, opts.max_iter);
}

}  // namespace detail

SdpSolution solve(const SdpProblem& problem, const SdpOptions& opts) {
  Eigen::MatrixXd schur;
  return detail::solve_with_workspace(problem, opts, schur);
}

SdpSolution SdpSolver::solve(const SdpProblem& problem) {
  ++solves_;
  return detail::solve_with_workspace(problem, opts_, schur_);
}

ResidualReport feasibility_certificate(const SdpSolution& sol, const SdpProblem& problem) {
  const auto& dims = problem.block_dims;
  ResidualReport rep;
  if (sol.x.size() != dims.size() || sol.z.size() != dims.size() ||
      sol.y.size() != static_cast<Eigen::Index>(problem.constraints.size()))
    throw Error(ErrorCode::DimensionMismatch, "solution does not match problem shape");

  Blocks c = problem.objective.to_dense(dims);
  double sense_sign = problem.sense == Sense::Maximize ? -1.0 : 1.0;

  Blocks zc = c;  // C - sum y_i A_i in minimization form
  for (auto& blk : zc) blk *= sense_sign;
  double dobj = 0.0;
  for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
    const auto a = problem.constraints[i].a.to_dense(dims);
    double tr = 0.0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      tr += a[k].cwiseProduct(sol.x[k]).sum();
      zc[k] -= sol.y(i) * a[k];
    }
    rep.max_equality_residual = std::max(rep.max_equality_residual, std::abs(tr - problem.constraints[i].b));
    dobj += problem.constraints[i].b * sol.y(i);
  }
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (dims[k] > 0) rep.max_dual_residual = std::max(rep.max_dual_residual, (zc[k] - sol.z[k]).cwiseAbs().maxCoeff());

  rep.min_eig_x = min_eigenvalue(sol.x);
  rep.min_eig_z = min_eigenvalue(sol.z);
  double pobj = 0.0;
  for (std::size_t k = 0; k < dims.size(); ++k) pobj += c[k].cwiseProduct(sol.x[k]).sum();
  rep.primal_value = pobj;
  rep.dual_value = sense_sign * dobj;
  rep.gap = std::abs(rep.primal_value - rep.dual_value);
  return rep;
}

void dump_problem(std::ostream& os, const SdpProblem& problem) {
  os << std::setprecision(17);
  os << "sense " << (problem.sense == Sense::Maximize ? "maximize" : "minimize") << "\n";
  os << "blocks";
  for (int d : problem.block_dims) os << ' ' << d;
  os << "\nobjective\n";
  for (const auto& e : problem.objective.entries())
    os << "  " << e.block << ' ' << e.row << ' ' << e.col << ' ' << e.value << "\n";
  for (std::size_t i = 0; i < problem.constraints.size(); ++i) {
    os << "constraint " << i << " b=" << problem.constraints[i].b << "\n";
    for (const auto& e : problem.constraints[i].a.entries())
      os << "  " << e.block << ' ' << e.row << ' ' << e.col << ' ' << e.value << "\n";
  }
}

}  // namespace chainbell
