// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time
// limits pinned below. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "chainbell/chained.hpp"
#include "chainbell/error.hpp"
#include "chainbell/experiment.hpp"
#include "chainbell/npa.hpp"
#include "chainbell/qstate.hpp"
#include "chainbell/sdp.hpp"
#include "chainbell/search.hpp"

using namespace chainbell;

namespace {

constexpr double kPi = std::numbers::pi;

// C1
constexpr double kTsirelsonTol = 1e-12;
constexpr double kC1Seconds = 1.0;
// C2
constexpr double kGramValueTol = 1e-5;
constexpr double kGramGapTol = 1e-6;
constexpr double kC2Seconds = 5.0;
// C3
constexpr double kWitnessTol = 1e-9;
constexpr double kC3Seconds = 1.0;
// C4
constexpr double kFig1Tol = 2e-3;
constexpr double kC4Seconds = 300.0;
// C5
constexpr double kEntropyAnchor = 1.1;
constexpr double kEntropyTol = 0.05;
constexpr double kGuessTol = 2e-3;
constexpr double kC5Seconds = 60.0;
// C6
constexpr double kTwoBitGuessMax = 0.27;
constexpr double kC6Seconds = 120.0;
// C7
constexpr double kZeroEntropy = 1e-7;     // "no randomness"
constexpr double kPositiveEntropy = 1e-6;  // "some randomness"
constexpr double kC7Seconds = 180.0;
// C8
constexpr double kOrderingTol = 1e-6;
constexpr double kC8Seconds = 600.0;
// C9
constexpr double kJGammaTol = 1e-6;
constexpr double kOnsetResolution = 1e-4;
constexpr double kC9Seconds = 1800.0;
// C10
constexpr double kDominanceTol = 1e-12;
constexpr double kBehaviorTol = 1e-10;
constexpr double kC10Seconds = 120.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    out.pass = false;
    out.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s limit)";
  }
  if (!out.pass) ++failures;
  std::printf("[%s] C%-2d %s: %s [%.2f s]\n", out.pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Behavior singlet_behavior(int n) {
  return behavior_from_state(bloch_decompose(make_singlet()), canonical_measurements(n));
}

double violation_entropy(int n, double p, SettingPair target, NpaLevel level) {
  const BellCoefficients c = chained_coefficients(n);
  const double i = bell_value(noisy_behavior(singlet_behavior(n), p), c);
  return max_prob_given_violation({n, n}, c, i, target, level).min_entropy_bits;
}

// Smallest p (to `resolution`) with positive violation-only randomness.
double onset(const BellCoefficients& coeffs, const Behavior& ideal, double lo, double hi, double resolution) {
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    (violation_randomness(coeffs, ideal, mid, NpaLevel::OnePlusAB).min_entropy_bits > kPositiveEntropy ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

int main() {
  std::printf("chainbell %s acceptance suite\n", tool_version());

  run(1, "Singular-value bound on the singlet equals 2n cos(pi/2n), n = 2..12", kC1Seconds, [] {
    const BlochForm singlet = bloch_decompose(make_singlet());
    double worst = 0.0;
    for (int n = 2; n <= 12; ++n)
      worst = std::max(worst, std::abs(theorem1_bound(singlet, n) - 2.0 * n * std::cos(kPi / (2.0 * n))));
    const double chsh = std::abs(theorem1_bound(singlet, 2) - 2.0 * std::numbers::sqrt2);
    return Outcome{worst <= kTsirelsonTol && chsh <= kTsirelsonTol,
                   "max error " + fmt("%.2e", worst) + ", CHSH error " + fmt("%.2e", chsh)};
  });

  run(2, "Gram SDP primal/dual equal n cos(pi/n), n = 2..8", kC2Seconds, [] {
    SdpSolver solver;
    double worst_value = 0.0, worst_gap = 0.0;
    bool optimal = true;
    for (int n = 2; n <= 8; ++n) {
      const GramResult g = solve_gram_sdp(n, solver);
      const double expected = n * std::cos(kPi / n);
      worst_value = std::max({worst_value, std::abs(g.primal - expected), std::abs(g.dual - expected)});
      worst_gap = std::max(worst_gap, g.gap);
      optimal = optimal && g.status == SolverStatus::Optimal;
    }
    return Outcome{optimal && worst_value <= kGramValueTol && worst_gap <= kGramGapTol,
                   "max value error " + fmt("%.2e", worst_value) + ", max gap " + fmt("%.2e", worst_gap)};
  });

  run(3, "Tightness witness saturates 2np cos(pi/2n) on Werner states", kC3Seconds, [] {
    double worst = 0.0;
    bool all_sufficient = true;
    for (double p : {0.5, 0.8, 1.0})
      for (int n = 2; n <= 5; ++n) {
        const BlochForm b = bloch_decompose(make_werner(p));
        const TightnessReport tr = tightness_check(b, n);
        if (!tr.sufficient || !tr.witness) {
          all_sufficient = false;
          continue;
        }
        const double v = bell_value(b, *tr.witness, chained_coefficients(n));
        worst = std::max(worst, std::abs(v - 2.0 * n * p * std::cos(kPi / (2.0 * n))));
      }
    return Outcome{all_sufficient && worst <= kWitnessTol, "max error " + fmt("%.2e", worst)};
  });

  run(4, "Swarm maximum matches 3 sqrt(3) nu on 25 X-states", kC4Seconds, [] {
    const ExperimentConfig cfg = default_config(ExperimentKind::Fig1);
    SwarmConfig swarm;  // defaults
    swarm.seed = cfg.seed;
    double worst = 0.0, worst_nu = 0.0;
    for (double nu : cfg.nu_grid) {
      const double l = (4.0 * nu - 1.0) / 3.0;
      const SearchResult r = pso_max_violation(bloch_decompose(make_xstate(nu, l)), chained_coefficients(3), swarm);
      const double err = std::abs(r.best_value - 3.0 * std::sqrt(3.0) * nu);
      if (err > worst) worst = err, worst_nu = nu;
    }
    return Outcome{cfg.nu_grid.size() == 25 && worst <= kFig1Tol,
                   "max |pso - 3 sqrt(3) nu| = " + fmt("%.2e", worst) + " at nu = " + fmt("%.4f", worst_nu)};
  });

  run(5, "Maximal chained violation certifies 1.1 bits at Q2", kC5Seconds, [] {
    const CertResult r =
        max_prob_given_violation({3, 3}, chained_coefficients(3), 3.0 * std::sqrt(3.0), {0, 0}, NpaLevel::Q2);
    const double expected_guess = (1.0 + std::cos(kPi / 6.0)) / 4.0;
    return Outcome{std::abs(r.min_entropy_bits - kEntropyAnchor) <= kEntropyTol &&
                       std::abs(r.p_guess - expected_guess) <= kGuessTol,
                   "H = " + fmt("%.6f", r.min_entropy_bits) + " bits, p_guess = " + fmt("%.8f", r.p_guess) +
                       " (expected " + fmt("%.8f", expected_guess) + ")"};
  });

  run(6, "Full statistics on pair (1,2) certifies two bits at 1+AB", kC6Seconds, [] {
    // Pair (1, (n+1)/2) in 1-based labels is (0, 1) here.
    const CertResult r = max_guess_full_statistics({3, 3}, singlet_behavior(3), {0, 1}, NpaLevel::OnePlusAB);
    return Outcome{r.p_guess <= kTwoBitGuessMax,
                   "p_guess = " + fmt("%.10f", r.p_guess) + ", H = " + fmt("%.6f", r.min_entropy_bits) + " bits"};
  });

  run(7, "Violation-only onset brackets for chained n = 3 and CHSH", kC7Seconds, [] {
    bool ok = true;
    std::string detail;
    for (double p : {0.70, 0.75, 0.769}) {
      const double h = violation_entropy(3, p, {0, 0}, NpaLevel::Q2);
      ok = ok && h <= kZeroEntropy;
      detail += "C3 H(" + fmt("%.3f", p) + ")=" + fmt("%.2e", h) + " ";
    }
    for (double p : {0.775, 0.8, 0.9}) {
      const double h = violation_entropy(3, p, {0, 0}, NpaLevel::Q2);
      ok = ok && h > kPositiveEntropy;
      detail += "C3 H(" + fmt("%.3f", p) + ")=" + fmt("%.2e", h) + " ";
    }
    const double lo = violation_entropy(2, 0.705, {0, 0}, NpaLevel::Q2);
    const double hi = violation_entropy(2, 0.710, {0, 0}, NpaLevel::Q2);
    ok = ok && lo <= kZeroEntropy && hi > kPositiveEntropy;
    detail += "CHSH H(0.705)=" + fmt("%.2e", lo) + " H(0.710)=" + fmt("%.2e", hi);
    return Outcome{ok, detail};
  });

  run(8, "Full statistics >= violation only, Q2 >= Q1 on 11 points of [0.78, 1]", kC8Seconds, [] {
    const Behavior ideal = singlet_behavior(3);
    const BellCoefficients c = chained_coefficients(3);
    double worst = std::numeric_limits<double>::infinity();
    std::string where;
    auto track = [&](double margin, const std::string& what) {
      if (margin < worst) worst = margin, where = what;
    };
    for (double p : linspace(0.78, 1.0, 11)) {
      const Behavior beh = noisy_behavior(ideal, p);
      const double i = bell_value(beh, c);
      double h[2][2];  // [level][mode: violation, full]
      int li = 0;
      for (NpaLevel level : {NpaLevel::Q1, NpaLevel::Q2}) {
        h[li][0] = max_prob_given_violation({3, 3}, c, i, {0, 0}, level).min_entropy_bits;
        h[li][1] = max_guess_full_statistics({3, 3}, beh, {0, 0}, level).min_entropy_bits;
        track(h[li][1] - h[li][0], std::string("full vs violation at ") + to_string(level) + ", p = " + fmt("%.3f", p));
        ++li;
      }
      track(h[1][0] - h[0][0], "Q2 vs Q1 violation, p = " + fmt("%.3f", p));
      track(h[1][1] - h[0][1], "Q2 vs Q1 full, p = " + fmt("%.3f", p));
    }
    return Outcome{worst >= -kOrderingTol, "worst margin " + fmt("%.2e", worst) + " (" + where + ")"};
  });

  run(9, "Randomness comparison at 1+AB: chained vs CHSH vs J_gamma", kC9Seconds, [] {
    const ExperimentConfig cfg = default_config(ExperimentKind::Fig3);
    const Behavior chsh_ideal = singlet_behavior(2);
    const Behavior c3_ideal = singlet_behavior(3);
    const BellCoefficients chsh = chained_coefficients(2);
    const BellCoefficients c3 = chained_coefficients(3);
    bool ok = true;
    std::string detail;

    for (double p : {0.98, 0.99, 1.0}) {
      const double hc = violation_randomness(chsh, chsh_ideal, p, NpaLevel::OnePlusAB).min_entropy_bits;
      const double h3 = violation_randomness(c3, c3_ideal, p, NpaLevel::OnePlusAB).min_entropy_bits;
      ok = ok && h3 > hc;
      detail += "p=" + fmt("%.2f", p) + " C3 " + fmt("%.3f", h3) + " > CHSH " + fmt("%.3f", hc) + "; ";
    }

    double previous = 0.0;
    for (int n : {3, 4, 5}) {
      const double t = onset(chained_coefficients(n), singlet_behavior(n), 0.6, 1.0, kOnsetResolution);
      ok = ok && t > previous;
      previous = t;
      detail += "onset n=" + std::to_string(n) + " " + fmt("%.4f", t) + "; ";
    }

    SwarmConfig swarm = cfg.swarm;
    swarm.seed = cfg.seed;
    const std::vector<JGammaStrategy> strategies = j_gamma_strategies(cfg.gamma_grid, swarm);
    double worst = std::numeric_limits<double>::infinity();
    for (double p : cfg.p_grid) {
      const double hc = violation_randomness(chsh, chsh_ideal, p, NpaLevel::OnePlusAB).min_entropy_bits;
      double best = -1.0;
      for (const auto& st : strategies)
        best = std::max(best, violation_randomness(st.coeffs, st.ideal, p, NpaLevel::OnePlusAB).min_entropy_bits);
      worst = std::min(worst, best - hc);
    }
    ok = ok && worst >= -kJGammaTol;
    detail += "min_p (J_gamma - CHSH) = " + fmt("%.2e", worst);
    return Outcome{ok, detail};
  });

  run(10, "Property suites over seeded random inputs", kC10Seconds, [] {
    std::mt19937_64 rng(20240611);
    std::normal_distribution<double> g;
    auto unit = [&] {
      Eigen::Vector3d v(g(rng), g(rng), g(rng));
      return Eigen::Vector3d(v / v.norm());
    };
    auto measurements = [&](int n) {
      std::vector<Eigen::Vector3d> a, b;
      for (int i = 0; i < n; ++i) a.push_back(unit());
      for (int i = 0; i < n; ++i) b.push_back(unit());
      return MeasurementSet(a, b);
    };

    int dominance = 0;
    for (int s = 0; s < 200; ++s) {
      const BlochForm b = bloch_decompose(random_state(rng));
      const int n = 2 + s % 5;
      const double bound = theorem1_bound(b, n);
      const BellCoefficients c = chained_coefficients(n);
      for (int m = 0; m < 200; ++m)
        if (bell_value(b, measurements(n), c) > bound + kDominanceTol) ++dominance;
    }

    int rayleigh = 0;
    for (int k = 0; k < 1000; ++k) {
      const int r = 1 + k % 5, c = 1 + (k / 5) % 5;
      Eigen::MatrixXd a(r, c);
      Eigen::VectorXd x(r), y(c);
      for (int i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
      for (int i = 0; i < r; ++i) x(i) = g(rng);
      for (int i = 0; i < c; ++i) y(i) = g(rng);
      if (!rayleigh_singular_bound(a, x, y).holds) ++rayleigh;
    }

    int behaviors = 0;
    for (int k = 0; k < 500; ++k) {
      const int n = 2 + k % 4;
      try {
        const Behavior beh = behavior_from_state(bloch_decompose(random_state(rng)), measurements(n));
        check_behavior(beh, kBehaviorTol);
        check_behavior(noisy_behavior(beh, unit_double(rng())), kBehaviorTol);
      } catch (const Error&) {
        ++behaviors;
      }
    }

    int certificates = 0;
    for (int k = 0; k < 100; ++k) {
      const int n = 2 + k % 8;
      Eigen::MatrixXd c(n, n);
      for (int i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
      c = (c + c.transpose()).eval() / 2.0;
      SdpProblem p;
      p.block_dims = {n};
      p.objective.add_dense(0, c);
      SdpProblem::Constraint tr;
      for (int i = 0; i < n; ++i) tr.a.add(0, i, i, 1.0);
      tr.b = 1.0;
      p.constraints.push_back(tr);
      const SdpSolution sol = solve(p);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
      if (!feasibility_certificate(sol, p).certifies_optimal() ||
          std::abs(sol.primal_value - es.eigenvalues().minCoeff()) > 1e-6)
        ++certificates;
    }
    for (int n = 2; n <= 6; ++n) {
      SdpSolver solver;
      const SdpProblem p = gram_sdp_problem(n);
      if (!feasibility_certificate(solver.solve(p), p).certifies_optimal()) ++certificates;
    }

    const bool ok = dominance == 0 && rayleigh == 0 && behaviors == 0 && certificates == 0;
    return Outcome{ok, "failures: dominance " + std::to_string(dominance) + "/40000, Rayleigh " +
                           std::to_string(rayleigh) + "/1000, behaviors " + std::to_string(behaviors) +
                           "/500, SDP certificates " + std::to_string(certificates) + "/105"};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
