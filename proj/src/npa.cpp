#include "chainbell/npa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <tuple>

#include "chainbell/error.hpp"

namespace chainbell {

const char* to_string(NpaLevel level) {
  switch (level) {
    case NpaLevel::Q1: return "q1";
    case NpaLevel::OnePlusAB: return "1+ab";
    case NpaLevel::Q2: return "q2";
  }
  return "?";
}

NpaLevel parse_level(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "q1" || t == "1") return NpaLevel::Q1;
  if (t == "1+ab" || t == "q1+ab" || t == "1ab") return NpaLevel::OnePlusAB;
  if (t == "q2" || t == "2") return NpaLevel::Q2;
  throw Error(ErrorCode::InvalidArgument, "unknown NPA level '" + text + "' (expected q1, 1+ab or q2)");
}

const char* to_string(ConstraintMode mode) {
  return mode == ConstraintMode::ViolationOnly ? "violation" : "full";
}

Word reduce_word(const Word& w, const Scenario& s) {
  Word out;
  auto append_party = [&](bool alice) {
    int last = -1;
    for (int op : w) {
      const bool is_alice = op < s.n_a;
      if (is_alice != alice) continue;
      if (op == last) continue;
      out.push_back(op);
      last = op;
    }
  };
  append_party(true);
  append_party(false);
  return out;
}

Word canonical_word(const Word& w, const Scenario& s) {
  Word fwd = reduce_word(w, s);
  Word rev(fwd.rbegin(), fwd.rend());
  rev = reduce_word(rev, s);
  return std::min(fwd, rev);
}

std::string word_label(const Word& w, const Scenario& s) {
  if (w.empty()) return "1";
  std::string out;
  for (int op : w)
    out += op < s.n_a ? "A" + std::to_string(op + 1) : "B" + std::to_string(op - s.n_a + 1);
  return out;
}

MonomialBasis build_basis(const Scenario& s, NpaLevel level) {
  if (s.n_a < 1 || s.n_b < 1) throw Error(ErrorCode::InvalidArgument, "scenario needs settings on both sides");
  MonomialBasis basis;
  basis.scenario = s;
  basis.level = level;
  auto push = [&](Word w) {
    basis.index.emplace(w, static_cast<int>(basis.words.size()));
    basis.words.push_back(std::move(w));
  };
  push({});
  for (int x = 0; x < s.n_a; ++x) push({x});
  for (int y = 0; y < s.n_b; ++y) push({s.n_a + y});
  if (level == NpaLevel::OnePlusAB || level == NpaLevel::Q2)
    for (int x = 0; x < s.n_a; ++x)
      for (int y = 0; y < s.n_b; ++y) push({x, s.n_a + y});
  if (level == NpaLevel::Q2) {
    for (int x = 0; x < s.n_a; ++x)
      for (int x2 = 0; x2 < s.n_a; ++x2)
        if (x != x2) push({x, x2});
    for (int y = 0; y < s.n_b; ++y)
      for (int y2 = 0; y2 < s.n_b; ++y2)
        if (y != y2) push({s.n_a + y, s.n_a + y2});
  }
  return basis;
}

MomentMatrix build_moment_matrix(const MonomialBasis& basis) {
  const Scenario& s = basis.scenario;
  MomentMatrix mm;
  mm.basis = basis;
  const int d = static_cast<int>(basis.words.size());
  mm.entry.resize(d, d);
  auto moment_of = [&](const Word& w) {
    auto [it, inserted] = mm.moment_index.emplace(w, static_cast<int>(mm.moments.size()));
    if (inserted) mm.moments.push_back(w);
    return it->second;
  };
  moment_of({});
  // Make sure the behavior moments exist even at Q1.
  for (int x = 0; x < s.n_a; ++x) moment_of({x});
  for (int y = 0; y < s.n_b; ++y) moment_of({s.n_a + y});
  for (int x = 0; x < s.n_a; ++x)
    for (int y = 0; y < s.n_b; ++y) moment_of({x, s.n_a + y});
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      Word w(basis.words[i].rbegin(), basis.words[i].rend());
      w.insert(w.end(), basis.words[j].begin(), basis.words[j].end());
      const int k = moment_of(canonical_word(w, s));
      mm.entry(i, j) = k;
      mm.entry(j, i) = k;
    }
  }
  return mm;
}

int MomentMatrix::alice(int x) const { return moment_index.at(Word{x}); }
int MomentMatrix::bob(int y) const { return moment_index.at(Word{basis.scenario.n_a + y}); }
int MomentMatrix::joint(int x, int y) const { return moment_index.at(Word{x, basis.scenario.n_a + y}); }

LinearForm& LinearForm::add(int var, double coef) {
  terms[var] += coef;
  return *this;
}

LinearForm MomentProgram::probability(int block, int x, int y, int a, int b) const {
  const int one = var(block, structure.identity());
  const int ma = var(block, structure.alice(x));
  const int mb = var(block, structure.bob(y));
  const int mab = var(block, structure.joint(x, y));
  LinearForm f;
  if (a > 0 && b > 0) {
    f.add(mab, 1.0);
  } else if (a > 0) {
    f.add(ma, 1.0).add(mab, -1.0);
  } else if (b > 0) {
    f.add(mb, 1.0).add(mab, -1.0);
  } else {
    f.add(one, 1.0).add(ma, -1.0).add(mb, -1.0).add(mab, 1.0);
  }
  return f;
}

LinearForm MomentProgram::correlator(int block, int x, int y) const {
  LinearForm f;
  f.add(var(block, structure.identity()), 1.0)
      .add(var(block, structure.alice(x)), -2.0)
      .add(var(block, structure.bob(y)), -2.0)
      .add(var(block, structure.joint(x, y)), 4.0);
  return f;
}

namespace {

struct Elimination {
  std::vector<int> free_vars;          // program variable per SDP variable
  std::vector<int> sdp_index;          // program variable -> SDP index or -1
  std::vector<int> pivots;             // pivot program variable per kept row
  std::vector<double> pivot_rhs;       // y_p = rhs - sum_j coef_j y_j
  std::vector<std::map<int, double>> pivot_terms;  // free var -> coef
};

Elimination eliminate(const MomentProgram& prog) {
  const int n = prog.num_vars();
  const int k = static_cast<int>(prog.equalities.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, n);
  Eigen::VectorXd f(k);
  for (int r = 0; r < k; ++r) {
    const auto& [form, value] = prog.equalities[r];
    for (const auto& [v, c] : form.terms) a(r, v) += c;
    f(r) = value - form.constant;
  }

  std::vector<int> pivot_col;
  std::vector<int> pivot_row;
  std::vector<bool> is_pivot(n, false);
  const double scale = k > 0 ? std::max(1.0, a.cwiseAbs().maxCoeff()) : 1.0;
  int row = 0;
  for (int r = 0; r < k; ++r) {
    // Gauss-Jordan: row r is already reduced against earlier pivots.
    int best = -1;
    double best_abs = 1e-10 * scale;
    for (int c = 0; c < n; ++c)
      if (!is_pivot[c] && std::abs(a(r, c)) > best_abs) {
        best_abs = std::abs(a(r, c));
        best = c;
      }
    if (best < 0) {
      if (std::abs(f(r)) > 1e-9 * (1.0 + std::abs(f(r))))
        throw Error(ErrorCode::Infeasible, "equality constraints are inconsistent");
      continue;
    }
    const double piv = a(r, best);
    a.row(r) /= piv;
    f(r) /= piv;
    for (int r2 = 0; r2 < k; ++r2) {
      if (r2 == r || a(r2, best) == 0.0) continue;
      const double factor = a(r2, best);
      a.row(r2) -= factor * a.row(r);
      f(r2) -= factor * f(r);
      a(r2, best) = 0.0;
    }
    is_pivot[best] = true;
    pivot_col.push_back(best);
    pivot_row.push_back(r);
    ++row;
  }

  Elimination e;
  e.sdp_index.assign(n, -1);
  for (int c = 0; c < n; ++c)
    if (!is_pivot[c]) {
      e.sdp_index[c] = static_cast<int>(e.free_vars.size());
      e.free_vars.push_back(c);
    }
  for (std::size_t i = 0; i < pivot_col.size(); ++i) {
    const int r = pivot_row[i];
    e.pivots.push_back(pivot_col[i]);
    e.pivot_rhs.push_back(f(r));
    std::map<int, double> terms;
    for (int c = 0; c < n; ++c)
      if (!is_pivot[c] && std::abs(a(r, c)) > 1e-14) terms[c] = a(r, c);
    e.pivot_terms.push_back(std::move(terms));
  }
  return e;
}

// Expresses a variable-indexed coefficient map in the free variables.
struct Affine {
  std::map<int, double> coef;  // SDP index -> coefficient
  double constant = 0.0;
};

}  // namespace

namespace {

// Gamma_b(z) = g0[b] + sum_j z_j g[j][b] over moment blocks and 1x1 slack
// blocks; an empty matrix stands for a zero coefficient.
struct AffineBlocks {
  std::vector<Eigen::MatrixXd> g0;
  std::vector<std::vector<Eigen::MatrixXd>> g;
};

Eigen::MatrixXd project(const Eigen::MatrixXd& m, const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out = v.transpose() * m * v;
  return 0.5 * (out + out.transpose());
}

void add_block(SymBlockMatrix& dst, int block, const Eigen::MatrixXd& m, double sign) {
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r <= c; ++r)
      if (std::abs(m(r, c)) > 1e-15) dst.add(block, r, c, sign * m(r, c));
}

// Face of the PSD cone the feasible set lives in: block b is restricted to
// the range of basis[b] (d_b x k_b, k_b may be 0).
struct Face {
  std::vector<Eigen::MatrixXd> basis;
  std::vector<int> active;  // blocks with k_b > 0
};

// Builds min tr(C X) with C = V'g0V and constraint rows from V'g_jV.
SdpProblem build_sdp(const AffineBlocks& ab, const Face& face, double constraint_sign,
                     const Eigen::VectorXd& rhs) {
  SdpProblem sdp;
  sdp.sense = Sense::Minimize;
  for (int b : face.active) sdp.block_dims.push_back(static_cast<int>(face.basis[b].cols()));
  for (std::size_t k = 0; k < face.active.size(); ++k) {
    const int b = face.active[k];
    add_block(sdp.objective, static_cast<int>(k), project(ab.g0[b], face.basis[b]), 1.0);
  }
  for (std::size_t j = 0; j < ab.g.size(); ++j) {
    SdpProblem::Constraint c;
    for (std::size_t k = 0; k < face.active.size(); ++k) {
      const int b = face.active[k];
      if (ab.g[j][b].size() == 0) continue;
      add_block(c.a, static_cast<int>(k), project(ab.g[j][b], face.basis[b]), constraint_sign);
    }
    c.b = rhs(static_cast<Eigen::Index>(j));
    sdp.constraints.push_back(std::move(c));
  }
  return sdp;
}

Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& w) {
  if (w.cols() == 0) return w;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU);
  int rank = 0;
  while (rank < svd.singularValues().size() && svd.singularValues()(rank) > 1e-8) ++rank;
  return svd.matrixU().leftCols(rank);
}

Eigen::MatrixXd complement(const Eigen::MatrixXd& w, int dim) {
  if (w.cols() == 0) return Eigen::MatrixXd::Identity(dim, dim);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  std::vector<int> keep;
  for (int i = 0; i < dim; ++i)
    if (es.eigenvalues()(i) < 0.5) keep.push_back(i);
  Eigen::MatrixXd v(dim, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(keep[i]);
  return v;
}

// The program restricted to the face orthogonal to `exposed`: free variables
// become offset + param * z, with Gamma(z) exposed = 0 solved in the
// least-squares sense.
struct Restricted {
  AffineBlocks ab;
  Face face;
  Eigen::VectorXd offset;
  Eigen::MatrixXd param;
  Eigen::VectorXd objective;
  double obj_const = 0.0;
  double residual = 0.0;  // inconsistency of the face equations
};

Restricted restrict_to(const AffineBlocks& base, const Eigen::VectorXd& objective, double obj_const,
                       const std::vector<Eigen::MatrixXd>& exposed) {
  const int m = static_cast<int>(base.g.size());
  const std::size_t nb = base.g0.size();
  Restricted out;
  out.obj_const = obj_const;
  for (std::size_t b = 0; b < nb; ++b) {
    out.face.basis.push_back(complement(exposed[b], static_cast<int>(base.g0[b].rows())));
    if (out.face.basis.back().cols() > 0) out.face.active.push_back(static_cast<int>(b));
  }

  int rows = 0;
  for (const auto& w : exposed) rows += static_cast<int>(w.size());
  if (rows == 0) {
    out.ab = base;
    out.offset = Eigen::VectorXd::Zero(m);
    out.param = Eigen::MatrixXd::Identity(m, m);
    out.objective = objective;
    return out;
  }

  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(rows, m);
  Eigen::VectorXd f(rows);
  int r0 = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const Eigen::MatrixXd& w = exposed[b];
    if (w.size() == 0) continue;
    const Eigen::Index n = w.size();
    Eigen::MatrixXd prod = -base.g0[b] * w;
    f.segment(r0, n) = Eigen::Map<const Eigen::VectorXd>(prod.data(), n);
    for (int j = 0; j < m; ++j) {
      if (base.g[j][b].size() == 0) continue;
      prod = base.g[j][b] * w;
      e.block(r0, j, n, 1) = Eigen::Map<const Eigen::VectorXd>(prod.data(), n);
    }
    r0 += static_cast<int>(n);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(e, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-5 * std::max(1.0, smax)) ++rank;
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(m);
  if (rank > 0)
    z0 = svd.matrixV().leftCols(rank) *
         (sv.head(rank).cwiseInverse().asDiagonal() * (svd.matrixU().leftCols(rank).transpose() * f));
  out.residual = (e * z0 - f).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd null = svd.matrixV().rightCols(m - rank);

  out.ab.g0 = base.g0;
  out.ab.g.assign(static_cast<std::size_t>(m - rank), std::vector<Eigen::MatrixXd>(nb));
  for (std::size_t b = 0; b < nb; ++b) {
    for (int j = 0; j < m; ++j) {
      if (base.g[j][b].size() == 0) continue;
      if (z0(j) != 0.0) out.ab.g0[b] += z0(j) * base.g[j][b];
      for (int k = 0; k < m - rank; ++k) {
        const double c = null(j, k);
        if (c == 0.0) continue;
        auto& dst = out.ab.g[k][b];
        if (dst.size() == 0) dst = Eigen::MatrixXd::Zero(base.g0[b].rows(), base.g0[b].cols());
        dst += c * base.g[j][b];
      }
    }
  }
  out.obj_const += objective.dot(z0);
  out.objective = null.transpose() * objective;
  out.offset = z0;
  out.param = null;
  return out;
}

// Solves max t s.t. Gamma(z) - t I >= 0 on the current face. Its primal
// certificate exposes directions every feasible Gamma must annihilate;
// returns them per block (empty when the face already has an interior).
SdpProblem interior_problem(const Restricted& r) {
  SdpProblem aux = build_sdp(r.ab, r.face, 1.0, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.ab.g.size())));
  SdpProblem::Constraint trace;
  for (std::size_t k = 0; k < r.face.active.size(); ++k)
    for (int i = 0; i < aux.block_dims[k]; ++i) trace.a.add(static_cast<int>(k), i, i, 1.0);
  trace.b = 1.0;
  aux.constraints.push_back(std::move(trace));
  return aux;
}

SdpOptions aux_options(const SdpOptions& opts) {
  SdpOptions aux_opts = opts;
  aux_opts.dump_path.clear();
  aux_opts.tol_gap = std::min(opts.tol_gap, 1e-10);
  aux_opts.tol_feas = std::min(opts.tol_feas, 1e-10);
  return aux_opts;
}

struct Exposure {
  std::vector<Eigen::MatrixXd> directions;  // per block, empty when none
  Eigen::VectorXd point;                    // free values near the relative interior
};

Exposure expose(const Restricted& r, const SdpOptions& opts) {
  const std::size_t nb = r.face.basis.size();
  Exposure res;
  res.directions.resize(nb);
  auto& out = res.directions;
  const SdpProblem aux = interior_problem(r);
  SdpOptions aux_opts = aux_options(opts);
  constexpr double kInteriorTol = 1e-7;
  constexpr double kInfeasibleTol = 1e-6;
  aux_opts.dual_target = kInteriorTol;
  const SdpSolution sol = solve(aux, aux_opts);

  if (sol.dual_value > kInteriorTol) return res;
  if (sol.primal_value < -kInfeasibleTol) {
    std::ostringstream os;
    os << "no positive semidefinite moment assignment (largest attainable min eigenvalue "
       << sol.primal_value << ")";
    throw Error(ErrorCode::Infeasible, os.str());
  }

  // With a zero optimum the dual iterate sits near the relative interior of
  // the feasible set; Gamma(z) appears there with z = -y.
  res.point = r.offset - r.param * sol.y.head(static_cast<Eigen::Index>(r.ab.g.size()));
  double top = 0.0;
  std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eig;
  for (std::size_t k = 0; k < r.face.active.size(); ++k) {
    eig.emplace_back(0.5 * (sol.x[k] + sol.x[k].transpose()));
    top = std::max(top, eig.back().eigenvalues().maxCoeff());
  }
  if (!(top > 0.0)) return res;
  for (std::size_t k = 0; k < r.face.active.size(); ++k) {
    const int b = r.face.active[k];
    const auto& vals = eig[k].eigenvalues();
    std::vector<int> picked;
    for (int i = 0; i < vals.size(); ++i)
      if (vals(i) > 1e-6 * top) picked.push_back(i);
    Eigen::MatrixXd w(r.face.basis[b].rows(), static_cast<Eigen::Index>(picked.size()));
    for (std::size_t i = 0; i < picked.size(); ++i)
      w.col(static_cast<Eigen::Index>(i)) = r.face.basis[b] * eig[k].eigenvectors().col(picked[i]);
    out[b] = std::move(w);
  }
  return res;
}

Eigen::MatrixXd evaluate(const AffineBlocks& ab, std::size_t b, const Eigen::VectorXd& y) {
  Eigen::MatrixXd g = ab.g0[b];
  for (std::size_t j = 0; j < ab.g.size(); ++j)
    if (ab.g[j][b].size() != 0 && y(static_cast<Eigen::Index>(j)) != 0.0) g += y(static_cast<Eigen::Index>(j)) * ab.g[j][b];
  return 0.5 * (g + g.transpose());
}

double exposure_residual(const AffineBlocks& ab, const std::vector<Eigen::MatrixXd>& exposed, const Eigen::VectorXd& y) {
  double r = 0.0;
  for (std::size_t b = 0; b < exposed.size(); ++b)
    if (exposed[b].cols() > 0) r = std::max(r, (evaluate(ab, b, y) * exposed[b]).cwiseAbs().maxCoeff());
  return r;
}

// Newton iteration on Gamma(y) W = 0 from a point near the relative interior
// of the face (so V'Gamma V is well conditioned): y moves to annihilate
// W'Gamma W, then W rotates by -(V'Gamma V)^+ V'Gamma W. The auxiliary
// solve only pins W to about the square root of its tolerance.
std::vector<Eigen::MatrixXd> sharpen(const AffineBlocks& base, std::vector<Eigen::MatrixXd> exposed,
                                     Eigen::VectorXd y) {
  const int m = static_cast<int>(base.g.size());
  const std::size_t nb = exposed.size();
  double res = exposure_residual(base, exposed, y);
  for (int iter = 0; iter < 8 && res > 1e-14; ++iter) {
    int rows = 0;
    for (const auto& w : exposed) rows += static_cast<int>(w.cols() * (w.cols() + 1) / 2);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, m);
    Eigen::VectorXd rhs(rows);
    int r0 = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const Eigen::MatrixXd& w = exposed[b];
      const int k = static_cast<int>(w.cols());
      if (k == 0) continue;
      const Eigen::MatrixXd cur = w.transpose() * evaluate(base, b, y) * w;
      for (int p = 0, r = r0; p < k; ++p)
        for (int q = p; q < k; ++q, ++r) rhs(r) = -cur(p, q);
      for (int j = 0; j < m; ++j) {
        if (base.g[j][b].size() == 0) continue;
        const Eigen::MatrixXd gw = w.transpose() * base.g[j][b] * w;
        for (int p = 0, r = r0; p < k; ++p)
          for (int q = p; q < k; ++q, ++r) a(r, j) = gw(p, q);
      }
      r0 += k * (k + 1) / 2;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    // Perturbed exposures add spurious singular values of the order of the
    // residual; treat those as rank-deficient directions.
    cod.setThreshold(std::clamp(100.0 * res, 1e-10, 1e-3));
    const Eigen::VectorXd step = cod.solve(rhs);
    Eigen::VectorXd y_next = y + step;

    std::vector<Eigen::MatrixXd> next(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      const Eigen::MatrixXd& w = exposed[b];
      if (w.cols() == 0) {
        next[b] = w;
        continue;
      }
      const Eigen::MatrixXd v = complement(w, static_cast<int>(w.rows()));
      const Eigen::MatrixXd g = evaluate(base, b, y_next);
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> inner(v.transpose() * g * v);
      inner.setThreshold(1e-8);
      const Eigen::MatrixXd dk = -inner.solve(v.transpose() * g * w);
      next[b] = orthonormal_columns(w + v * dk);
      if (next[b].cols() != w.cols()) return exposed;
    }
    const double next_res = exposure_residual(base, next, y_next);
    if (!(next_res < res)) break;
    exposed = std::move(next);
    y = std::move(y_next);
    res = next_res;
  }
  return exposed;
}

struct FaceSolve {
  SolverStatus status = SolverStatus::Optimal;
  int iterations = 0;
  double value = 0.0;
  double attained = 0.0;
  double gap = 0.0;
  Eigen::VectorXd free_values;
};

FaceSolve solve_on_face(const Restricted& r, const SdpOptions& opts) {
  FaceSolve out;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.ab.g.size()));
  if (r.face.active.empty() || r.ab.g.empty()) {
    out.value = out.attained = r.obj_const;
  } else {
    // Gamma(z) = F0 + sum_j z_j F_j; standard form uses C = F0, A_j = -F_j.
    const SdpSolution sol = solve(build_sdp(r.ab, r.face, -1.0, r.objective), opts);
    out.status = sol.status;
    out.iterations = sol.iterations;
    out.value = sol.primal_value + r.obj_const;
    out.attained = sol.dual_value + r.obj_const;
    out.gap = sol.gap;
    z = sol.y;
  }
  out.free_values = r.offset + r.param * z;
  return out;
}

}  // namespace

MomentSolution solve_moment_program(const MomentProgram& prog, const SdpOptions& opts) {
  const Elimination elim = eliminate(prog);
  const int n = prog.num_vars();
  std::vector<int> pivot_of(n, -1);
  for (std::size_t i = 0; i < elim.pivots.size(); ++i) pivot_of[elim.pivots[i]] = static_cast<int>(i);

  auto substitute = [&](int var) {
    Affine out;
    if (elim.sdp_index[var] >= 0) {
      out.coef[elim.sdp_index[var]] = 1.0;
      return out;
    }
    const int p = pivot_of[var];
    out.constant = elim.pivot_rhs[p];
    for (const auto& [fv, c] : elim.pivot_terms[p]) out.coef[elim.sdp_index[fv]] -= c;
    return out;
  };
  std::vector<Affine> subst(n);
  for (int v = 0; v < n; ++v) subst[v] = substitute(v);

  const int m = static_cast<int>(elim.free_vars.size());
  const int d = prog.structure.dim();
  const int nblocks = prog.blocks + prog.slacks;

  AffineBlocks base;
  base.g.assign(m, std::vector<Eigen::MatrixXd>(nblocks));
  for (int b = 0; b < nblocks; ++b) {
    const int bd = b < prog.blocks ? d : 1;
    base.g0.push_back(Eigen::MatrixXd::Zero(bd, bd));
  }
  auto place = [&](int block, int r, int c, int var) {
    const Affine& af = subst[var];
    base.g0[block](r, c) += af.constant;
    if (r != c) base.g0[block](c, r) += af.constant;
    for (const auto& [j, coef] : af.coef) {
      if (coef == 0.0) continue;
      auto& mat = base.g[j][block];
      if (mat.size() == 0) mat = Eigen::MatrixXd::Zero(base.g0[block].rows(), base.g0[block].cols());
      mat(r, c) += coef;
      if (r != c) mat(c, r) += coef;
    }
  };
  for (int b = 0; b < prog.blocks; ++b)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i <= j; ++i) place(b, i, j, prog.var(b, prog.structure.entry(i, j)));
  for (int s = 0; s < prog.slacks; ++s) place(prog.blocks + s, 0, 0, prog.slack_var(s));

  Eigen::VectorXd obj = Eigen::VectorXd::Zero(m);
  double obj_const = prog.objective.constant;
  for (const auto& [v, c] : prog.objective.terms) {
    obj_const += c * subst[v].constant;
    for (const auto& [j, coef] : subst[v].coef) obj(j) += c * coef;
  }

  auto gamma_of = [&](const Eigen::VectorXd& free_values, Eigen::VectorXd& moments) {
    moments.resize(n);
    for (int v = 0; v < n; ++v) {
      double val = subst[v].constant;
      for (const auto& [j, coef] : subst[v].coef) val += coef * free_values(j);
      moments(v) = val;
    }
    std::vector<Eigen::MatrixXd> blocks;
    for (int b = 0; b < prog.blocks; ++b) {
      Eigen::MatrixXd g(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = moments(prog.var(b, prog.structure.entry(i, j)));
      blocks.push_back(std::move(g));
    }
    for (int s = 0; s < prog.slacks; ++s) blocks.push_back(Eigen::MatrixXd::Constant(1, 1, moments(prog.slack_var(s))));
    return blocks;
  };

  // Facial reduction: strip directions that no feasible Gamma can use, so the
  // final program has a strictly feasible moment side.
  std::vector<Eigen::MatrixXd> exposed(nblocks);
  for (int b = 0; b < nblocks; ++b) exposed[b] = Eigen::MatrixXd::Zero(base.g0[b].rows(), 0);
  Restricted restricted = restrict_to(base, obj, obj_const, exposed);
  for (int round = 0; round < nblocks * d && !restricted.face.active.empty() && !restricted.ab.g.empty(); ++round) {
    const Exposure exposure = expose(restricted, opts);
    const std::vector<Eigen::MatrixXd>& fresh = exposure.directions;
    bool any = false;
    for (int b = 0; b < nblocks; ++b) {
      if (fresh[b].cols() == 0) continue;
      any = true;
      Eigen::MatrixXd joined(exposed[b].rows(), exposed[b].cols() + fresh[b].cols());
      joined << exposed[b], fresh[b];
      exposed[b] = orthonormal_columns(joined);
    }
    if (!any) break;
    exposed = sharpen(base, exposed, exposure.point);
    restricted = restrict_to(base, obj, obj_const, exposed);
  }

  const FaceSolve fs = solve_on_face(restricted, opts);
  MomentSolution out;
  const std::vector<Eigen::MatrixXd> blocks = gamma_of(fs.free_values, out.moments);

  out.status = fs.status;
  out.iterations = fs.iterations;
  out.value = fs.value;
  out.attained = fs.attained;
  out.gap = fs.gap;
  out.min_gamma_eig = std::numeric_limits<double>::infinity();
  for (int b = 0; b < nblocks; ++b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blocks[b], Eigen::EigenvaluesOnly);
    out.min_gamma_eig = std::min(out.min_gamma_eig, es.eigenvalues().minCoeff());
    if (b < prog.blocks) out.gamma.push_back(blocks[b]);
  }

  if (out.status != SolverStatus::Optimal && out.min_gamma_eig < -1e-6) {
    std::ostringstream os;
    os << "no positive semidefinite moment assignment (min eigenvalue " << out.min_gamma_eig
       << ", solver status " << to_string(out.status) << ")";
    throw Error(ErrorCode::Infeasible, os.str());
  }
  return out;
}

SdpOptions default_npa_options() {
  SdpOptions o;
  o.tol_gap = 1e-8;
  o.tol_feas = 1e-8;
  o.max_iter = 150;
  return o;
}

double min_entropy(double p_guess) {
  if (!(p_guess > 0.0) || p_guess > 1.0 + 1e-9)
    throw Error(ErrorCode::InvalidArgument, "guessing probability must lie in (0, 1]");
  return 0.0 - std::log2(std::min(p_guess, 1.0));  // 0 - x keeps +0 at p_guess = 1
}

namespace {

MomentProgram make_program(const Scenario& s, NpaLevel level, int blocks) {
  MomentProgram prog;
  prog.structure = build_moment_matrix(build_basis(s, level));
  prog.blocks = blocks;
  return prog;
}

void check_coefficients(const Scenario& s, const BellCoefficients& coeffs) {
  if (coeffs.n_a() != s.n_a || coeffs.n_b() != s.n_b)
    throw Error(ErrorCode::DimensionMismatch, "Bell coefficients do not match the scenario");
}

void check_target(const Scenario& s, SettingPair t) {
  if (t.x < 0 || t.x >= s.n_a || t.y < 0 || t.y >= s.n_b)
    throw Error(ErrorCode::InvalidArgument, "target setting pair out of range");
}

LinearForm bell_form(const MomentProgram& prog, const BellCoefficients& coeffs) {
  LinearForm f;
  for (int x = 0; x < coeffs.n_a(); ++x)
    for (int y = 0; y < coeffs.n_b(); ++y) {
      const double w = coeffs.weights(x, y);
      if (w == 0.0) continue;
      for (const auto& [v, c] : prog.correlator(0, x, y).terms) f.add(v, w * c);
    }
  return f;
}

CertResult finalize(CertResult r) {
  r.p_guess = std::min(r.p_guess, 1.0);
  r.min_entropy_bits = min_entropy(r.p_guess);
  return r;
}

}  // namespace

std::vector<std::pair<LinearForm, double>> behavior_constraints(const MomentProgram& prog,
                                                                const Behavior& beh) {
  const Scenario& s = prog.structure.basis.scenario;
  if (beh.n_a() != s.n_a || beh.n_b() != s.n_b)
    throw Error(ErrorCode::DimensionMismatch, "behavior does not match the scenario");
  check_behavior(beh, 1e-8);
  const auto& mm = prog.structure;
  auto summed = [&](int moment) {
    LinearForm f;
    for (int b = 0; b < prog.blocks; ++b) f.add(prog.var(b, moment), 1.0);
    return f;
  };
  std::vector<std::pair<LinearForm, double>> eqs;
  eqs.emplace_back(summed(mm.identity()), 1.0);
  for (int x = 0; x < s.n_a; ++x) eqs.emplace_back(summed(mm.alice(x)), beh.alice_marginal(x, +1));
  for (int y = 0; y < s.n_b; ++y) eqs.emplace_back(summed(mm.bob(y)), beh.bob_marginal(y, +1));
  for (int x = 0; x < s.n_a; ++x)
    for (int y = 0; y < s.n_b; ++y) eqs.emplace_back(summed(mm.joint(x, y)), beh.p(x, y, +1, +1));
  return eqs;
}

double relaxation_max(const Scenario& s, const BellCoefficients& coeffs, NpaLevel level, const SdpOptions& opts) {
  check_coefficients(s, coeffs);
  using Key = std::tuple<int, int, int, std::vector<double>, double, double>;
  static std::mutex mutex;
  static std::map<Key, double> cache;
  Key key{s.n_a, s.n_b, static_cast<int>(level),
          std::vector<double>(coeffs.weights.data(), coeffs.weights.data() + coeffs.weights.size()),
          opts.tol_gap, opts.tol_feas};
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  MomentProgram prog = make_program(s, level, 1);
  prog.equalities.emplace_back(LinearForm{}.add(prog.var(0, prog.structure.identity()), 1.0), 1.0);
  prog.objective = bell_form(prog, coeffs);
  const MomentSolution sol = solve_moment_program(prog, opts);
  std::lock_guard<std::mutex> lock(mutex);
  cache[key] = sol.attained;
  return sol.attained;
}

CertResult max_prob_given_violation(const Scenario& s, const BellCoefficients& coeffs, double observed,
                                    SettingPair target, NpaLevel level, ViolationConstraint mode,
                                    const SdpOptions& opts) {
  check_coefficients(s, coeffs);
  check_target(s, target);

  // Values at the edge of the relaxation are pulled onto the attained
  // extreme so the program stays feasible.
  double value = observed;
  const double upper = relaxation_max(s, coeffs, level, opts);
  if (value > upper) {
    if (value > upper + 1e-6 * (1.0 + std::abs(upper))) {
      std::ostringstream os;
      os.precision(10);
      os << "Bell value " << observed << " exceeds the " << to_string(level) << " relaxation maximum " << upper;
      throw Error(ErrorCode::Infeasible, os.str());
    }
    value = upper;
  }
  if (mode == ViolationConstraint::Equal) {
    BellCoefficients neg{-coeffs.weights};
    const double lower = -relaxation_max(s, neg, level, opts);
    if (value < lower) {
      if (value < lower - 1e-6 * (1.0 + std::abs(lower))) {
        std::ostringstream os;
        os.precision(10);
        os << "Bell value " << observed << " is below the " << to_string(level) << " relaxation minimum " << lower;
        throw Error(ErrorCode::Infeasible, os.str());
      }
      value = lower;
    }
  }

  CertResult res;
  res.level = level;
  res.setting = target;
  res.constraint_mode = ConstraintMode::ViolationOnly;
  res.p_guess = -1.0;
  res.solver_status = SolverStatus::Optimal;
  for (int a : {+1, -1}) {
    for (int b : {+1, -1}) {
      MomentProgram prog = make_program(s, level, 1);
      if (mode == ViolationConstraint::AtLeast) prog.slacks = 1;
      prog.equalities.emplace_back(LinearForm{}.add(prog.var(0, prog.structure.identity()), 1.0), 1.0);
      LinearForm bell = bell_form(prog, coeffs);
      if (mode == ViolationConstraint::AtLeast) bell.add(prog.slack_var(0), -1.0);
      prog.equalities.emplace_back(std::move(bell), value);
      prog.objective = prog.probability(0, target.x, target.y, a, b);
      const MomentSolution sol = solve_moment_program(prog, opts);
      res.per_outcome.push_back(sol.value);
      if (sol.value > res.p_guess) res.p_guess = sol.value;
      if (sol.status != SolverStatus::Optimal) res.solver_status = sol.status;
      res.gap = std::max(res.gap, sol.gap);
    }
  }
  return finalize(res);
}

CertResult max_guess_full_statistics(const Scenario& s, const Behavior& beh, SettingPair target, NpaLevel level,
                                     const SdpOptions& opts) {
  check_target(s, target);
  MomentProgram prog = make_program(s, level, 4);
  prog.equalities = behavior_constraints(prog, beh);
  // Block e is Eve's guess for the outcome pair e = (++, +-, -+, --).
  const int outcomes[4][2] = {{+1, +1}, {+1, -1}, {-1, +1}, {-1, -1}};
  for (int e = 0; e < 4; ++e)
    for (const auto& [v, c] : prog.probability(e, target.x, target.y, outcomes[e][0], outcomes[e][1]).terms)
      prog.objective.add(v, c);

  const MomentSolution sol = solve_moment_program(prog, opts);
  CertResult res;
  res.level = level;
  res.setting = target;
  res.constraint_mode = ConstraintMode::FullStatistics;
  res.p_guess = sol.value;
  res.solver_status = sol.status;
  res.gap = sol.gap;
  res.gamma = sol.gamma;
  return finalize(res);
}

SettingSweep full_statistics_all_settings(const Scenario& s, const Behavior& beh, NpaLevel level,
                                          const SdpOptions& opts) {
  SettingSweep sweep;
  for (int x = 0; x < s.n_a; ++x)
    for (int y = 0; y < s.n_b; ++y) {
      sweep.per_setting.push_back(max_guess_full_statistics(s, beh, {x, y}, level, opts));
      if (sweep.per_setting.size() == 1 || sweep.per_setting.back().p_guess > sweep.worst.p_guess)
        sweep.worst = sweep.per_setting.back();
    }
  return sweep;
}

}  // namespace chainbell
