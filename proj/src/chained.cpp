#include "chainbell/chained.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "chainbell/error.hpp"

namespace chainbell {

namespace {

void require_settings(int n) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "setting count must be >= 2, got " + std::to_string(n));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

MeasurementSet::MeasurementSet(std::vector<Eigen::Vector3d> alice, std::vector<Eigen::Vector3d> bob)
    : alice_(std::move(alice)), bob_(std::move(bob)) {
  auto check = [](const std::vector<Eigen::Vector3d>& vs, const char* who) {
    for (std::size_t i = 0; i < vs.size(); ++i)
      if (std::abs(vs[i].norm() - 1.0) > 1e-12)
        throw Error(ErrorCode::InvalidArgument, std::string(who) + " vector " + std::to_string(i) +
                                                    " has norm " + fmt(vs[i].norm()));
  };
  check(alice_, "alice");
  check(bob_, "bob");
}

Behavior::Behavior(int n_a, int n_b) : n_a_(n_a), n_b_(n_b) {
  if (n_a < 1 || n_b < 1) throw Error(ErrorCode::InvalidArgument, "behavior needs at least one setting per party");
  table_.assign(static_cast<std::size_t>(n_a) * n_b * 4, 0.0);
}

double Behavior::alice_marginal(int x, int a) const { return p(x, 0, a, +1) + p(x, 0, a, -1); }

double Behavior::bob_marginal(int y, int b) const { return p(0, y, +1, b) + p(0, y, -1, b); }

double Behavior::correlator(int x, int y) const {
  return p(x, y, +1, +1) - p(x, y, +1, -1) - p(x, y, -1, +1) + p(x, y, -1, -1);
}

void check_behavior(const Behavior& beh, double tol) {
  for (int x = 0; x < beh.n_a(); ++x) {
    for (int y = 0; y < beh.n_b(); ++y) {
      double total = 0.0;
      for (int a : {+1, -1}) {
        for (int b : {+1, -1}) {
          const double v = beh.p(x, y, a, b);
          if (v < -1e-12 || !std::isfinite(v))
            throw Error(ErrorCode::NegativeProbability, "p(" + std::to_string(a) + std::to_string(b) + "|" +
                                                            std::to_string(x) + std::to_string(y) + ") = " + fmt(v));
          total += v;
        }
      }
      if (std::abs(total - 1.0) > tol)
        throw Error(ErrorCode::NotNormalized, "setting pair (" + std::to_string(x) + "," + std::to_string(y) +
                                                  ") sums to " + fmt(total));
    }
  }
  for (int x = 0; x < beh.n_a(); ++x)
    for (int a : {+1, -1}) {
      const double ref = beh.p(x, 0, a, +1) + beh.p(x, 0, a, -1);
      for (int y = 1; y < beh.n_b(); ++y) {
        const double d = std::abs(beh.p(x, y, a, +1) + beh.p(x, y, a, -1) - ref);
        if (d > tol) throw Error(ErrorCode::Signaling, "Alice marginal depends on y by " + fmt(d));
      }
    }
  for (int y = 0; y < beh.n_b(); ++y)
    for (int b : {+1, -1}) {
      const double ref = beh.p(0, y, +1, b) + beh.p(0, y, -1, b);
      for (int x = 1; x < beh.n_a(); ++x) {
        const double d = std::abs(beh.p(x, y, +1, b) + beh.p(x, y, -1, b) - ref);
        if (d > tol) throw Error(ErrorCode::Signaling, "Bob marginal depends on x by " + fmt(d));
      }
    }
}

BellCoefficients chained_coefficients(int n, bool transposed) {
  require_settings(n);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) w(k, k) = 1.0;
  for (int k = 0; k + 1 < n; ++k) w(k + 1, k) = 1.0;
  w(0, n - 1) = -1.0;
  if (transposed) w.transposeInPlace();
  return {w};
}

BellCoefficients j_gamma_coefficients(double gamma) {
  constexpr double kMax = std::numbers::pi / 12.0;
  if (!(gamma >= -1e-15 && gamma <= kMax + 1e-15))
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0, pi/12], got " + fmt(gamma));
  const double cg = std::cos(gamma + std::numbers::pi / 6.0);
  const double c = 4.0 * cg * cg - 1.0;
  Eigen::MatrixXd w(2, 2);
  w << 1.0, c, c, -c;
  return {w};
}

double classical_bound(int n) {
  require_settings(n);
  return 2.0 * n - 2.0;
}

double tsirelson_bound(int n) {
  require_settings(n);
  return 2.0 * n * std::cos(std::numbers::pi / (2.0 * n));
}

double theorem1_bound(const BlochForm& b, int n) {
  const double sigma = correlation_svd(b).sigma_max;
  if (sigma == 0.0) return 0.0;
  return tsirelson_bound(n) * sigma;
}

TightnessReport tightness_check(const BlochForm& b, int n, double rel_tol) {
  require_settings(n);
  const SvdReport svd = correlation_svd(b, rel_tol);
  if (svd.sigma_max <= 1e-12)
    throw Error(ErrorCode::DegenerateCorrelation,
                "sigma_max = " + fmt(svd.sigma_max) + "; the bound is 0 and trivially attained");

  TightnessReport rep;
  if (svd.degeneracy < 2) {
    rep.sufficient = false;
    rep.reason = "sigma_max = " + fmt(svd.sigma_max) + " has degeneracy 1 (next singular value " +
                 fmt(svd.singular_values(1)) + "); sufficient condition not met";
    return rep;
  }

  const Eigen::Vector3d v1 = svd.right_vectors.col(0);
  const Eigen::Vector3d v2 = svd.right_vectors.col(1);
  std::vector<Eigen::Vector3d> bob(n), alice(n);
  for (int i = 0; i < n; ++i) {
    const double phi = std::numbers::pi * (2.0 * (i + 1) - 1.0) / (2.0 * n);
    bob[i] = (std::cos(phi) * v1 + std::sin(phi) * v2).normalized();
  }
  auto aligned = [&](const Eigen::Vector3d& v) { return Eigen::Vector3d((b.m * v).normalized()); };
  alice[0] = aligned(bob[0] - bob[n - 1]);
  for (int k = 0; k + 1 < n; ++k) alice[k + 1] = aligned(bob[k] + bob[k + 1]);

  rep.sufficient = true;
  rep.reason = "sigma_max = " + fmt(svd.sigma_max) + " has degeneracy " + std::to_string(svd.degeneracy);
  rep.witness.emplace(std::move(alice), std::move(bob));
  return rep;
}

MeasurementSet canonical_measurements(int n) {
  require_settings(n);
  std::vector<Eigen::Vector3d> alice(n), bob(n);
  for (int i = 0; i < n; ++i) {
    const double ta = std::numbers::pi * i / n;
    const double tb = std::numbers::pi * (2.0 * i + 1.0) / (2.0 * n);
    alice[i] = Eigen::Vector3d(-std::sin(ta), 0.0, -std::cos(ta));
    bob[i] = Eigen::Vector3d(std::sin(tb), 0.0, std::cos(tb));
  }
  return MeasurementSet(std::move(alice), std::move(bob));
}

double correlator(const BlochForm& b, const Eigen::Vector3d& a, const Eigen::Vector3d& bv) {
  return a.dot(b.m * bv);
}

double alice_expectation(const BlochForm& b, const Eigen::Vector3d& a) { return b.r.dot(a); }

double bob_expectation(const BlochForm& b, const Eigen::Vector3d& bv) { return b.s.dot(bv); }

double bell_value(const BlochForm& b, const MeasurementSet& ms, const BellCoefficients& coeffs) {
  if (ms.n_a() != coeffs.n_a() || ms.n_b() != coeffs.n_b())
    throw Error(ErrorCode::DimensionMismatch, "measurement set and coefficients disagree on setting counts");
  double total = 0.0;
  for (int x = 0; x < coeffs.n_a(); ++x)
    for (int y = 0; y < coeffs.n_b(); ++y)
      if (coeffs.weights(x, y) != 0.0) total += coeffs.weights(x, y) * correlator(b, ms.alice()[x], ms.bob()[y]);
  return total;
}

double bell_value(const Behavior& beh, const BellCoefficients& coeffs) {
  if (beh.n_a() != coeffs.n_a() || beh.n_b() != coeffs.n_b())
    throw Error(ErrorCode::DimensionMismatch, "behavior and coefficients disagree on setting counts");
  double total = 0.0;
  for (int x = 0; x < coeffs.n_a(); ++x)
    for (int y = 0; y < coeffs.n_b(); ++y) total += coeffs.weights(x, y) * beh.correlator(x, y);
  return total;
}

Behavior behavior_from_state(const BlochForm& b, const MeasurementSet& ms) {
  Behavior beh(ms.n_a(), ms.n_b());
  for (int x = 0; x < ms.n_a(); ++x) {
    const double ea = alice_expectation(b, ms.alice()[x]);
    for (int y = 0; y < ms.n_b(); ++y) {
      const double eb = bob_expectation(b, ms.bob()[y]);
      const double eab = correlator(b, ms.alice()[x], ms.bob()[y]);
      for (int a : {+1, -1})
        for (int bo : {+1, -1}) beh.set(x, y, a, bo, 0.25 * (1.0 + a * ea + bo * eb + a * bo * eab));
    }
  }
  return beh;
}

Behavior noisy_behavior(const Behavior& q, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "visibility must lie in [0, 1], got " + fmt(p));
  Behavior out(q.n_a(), q.n_b());
  for (int x = 0; x < q.n_a(); ++x)
    for (int y = 0; y < q.n_b(); ++y)
      for (int a : {+1, -1})
        for (int b : {+1, -1}) out.set(x, y, a, b, p * q.p(x, y, a, b) + (1.0 - p) * 0.25);
  return out;
}

SdpProblem gram_sdp_problem(int n) {
  require_settings(n);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    w(k, k + 1) += 1.0;
    w(k + 1, k) += 1.0;
  }
  w(0, n - 1) -= 1.0;
  w(n - 1, 0) -= 1.0;

  SdpProblem p;
  p.sense = Sense::Maximize;
  p.block_dims = {n};
  p.objective.add_dense(0, 0.5 * w);
  for (int i = 0; i < n; ++i) {
    SdpProblem::Constraint c;
    c.a.add(0, i, i, 1.0);
    c.b = 1.0;
    p.constraints.push_back(std::move(c));
  }
  return p;
}

GramResult solve_gram_sdp(int n, SdpSolver& solver) {
  const SdpProblem problem = gram_sdp_problem(n);
  const SdpSolution sol = solver.solve(problem);
  if (sol.status != SolverStatus::Optimal)
    throw Error(ErrorCode::SolverFailure, std::string("Gram program ended with status ") + to_string(sol.status));
  GramResult out;
  out.primal = sol.primal_value;
  out.dual = sol.dual_value;
  out.gram = sol.x[0];
  out.multipliers = -sol.y;
  out.status = sol.status;
  out.gap = sol.gap;
  return out;
}

double werner_witness_threshold(int n) { return classical_bound(n) / tsirelson_bound(n); }

bool xstate_entangled(double nu, double l) {
  return 1.0 - 2.0 * nu + l > 0.0 && 1.0 - 2.0 * nu - l < 0.0 && l > 0.0 && l < 1.0;
}

}  // namespace chainbell
