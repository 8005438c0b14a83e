#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "chainbell/chained.hpp"
#include "chainbell/qstate.hpp"
#include "chainbell/sdp.hpp"
#include "support.hpp"

using namespace chainbell;
using testing::code_of;

TEST_CASE("chained weights for n = 3") {
  Eigen::MatrixXd expected(3, 3);
  expected << 1, 0, -1,
              1, 1, 0,
              0, 1, 1;
  CHECK((chained_coefficients(3).weights - expected).norm() == 0.0);
  CHECK((chained_coefficients(3, true).weights - expected.transpose()).norm() == 0.0);
  CHECK(code_of([] { chained_coefficients(1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("n = 2 is CHSH") {
  Eigen::MatrixXd chsh(2, 2);
  chsh << 1, -1, 1, 1;
  CHECK((chained_coefficients(2).weights - chsh).norm() == 0.0);
  CHECK(classical_bound(2) == 2.0);
  CHECK(tsirelson_bound(2) == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-15));
}

TEST_CASE("singlet bound equals the Tsirelson value for n = 2..12") {
  const BlochForm singlet = bloch_decompose(make_singlet());
  for (int n = 2; n <= 12; ++n) {
    const double expected = 2.0 * n * std::cos(std::numbers::pi / (2.0 * n));
    CHECK(std::abs(theorem1_bound(singlet, n) - expected) <= 1e-12);
    CHECK(std::abs(bell_value(singlet, canonical_measurements(n), chained_coefficients(n)) - expected) <= 1e-12);
  }
}

TEST_CASE("classical bound holds for every deterministic strategy") {
  for (int n = 2; n <= 6; ++n) {
    const BellCoefficients c = chained_coefficients(n);
    double best = -1e9;
    for (int ma = 0; ma < (1 << n); ++ma)
      for (int mb = 0; mb < (1 << n); ++mb) {
        double v = 0.0;
        for (int x = 0; x < n; ++x)
          for (int y = 0; y < n; ++y)
            v += c.weights(x, y) * ((ma >> x & 1) ? 1 : -1) * ((mb >> y & 1) ? 1 : -1);
        best = std::max(best, v);
      }
    CHECK(best == classical_bound(n));
  }
}

TEST_CASE("bound dominates the Bell value: 200 states x 200 measurement sets") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pick_n(2, 6);
  int violations = 0;
  double worst = -1e9;
  for (int s = 0; s < 200; ++s) {
    const BlochForm b = bloch_decompose(random_state(rng));
    const int n = pick_n(rng);
    const double bound = theorem1_bound(b, n);
    const BellCoefficients c = chained_coefficients(n);
    for (int m = 0; m < 200; ++m) {
      const double v = bell_value(b, testing::random_measurements(n, rng), c);
      worst = std::max(worst, v - bound);
      if (v > bound + 1e-12) ++violations;
    }
  }
  CHECK(violations == 0);
  CHECK(worst <= 1e-12);
}

TEST_CASE("tightness witness saturates the Werner bound") {
  for (double p : {0.5, 0.8, 1.0})
    for (int n = 2; n <= 5; ++n) {
      const BlochForm b = bloch_decompose(make_werner(p));
      const TightnessReport tr = tightness_check(b, n);
      REQUIRE(tr.sufficient);
      REQUIRE(tr.witness.has_value());
      const double target = 2.0 * n * p * std::cos(std::numbers::pi / (2.0 * n));
      CHECK(std::abs(bell_value(b, *tr.witness, chained_coefficients(n)) - target) <= 1e-9);
    }
}

TEST_CASE("tightness on a rank-one correlation matrix is not certified") {
  BlochForm b;
  b.m(2, 2) = 1.0;  // |00><00| + |11><11| mixture
  const TightnessReport tr = tightness_check(b, 3);
  CHECK_FALSE(tr.sufficient);
  CHECK_FALSE(tr.reason.empty());
  CHECK(code_of([] { tightness_check(bloch_decompose(make_maximally_mixed()), 3); }) ==
        ErrorCode::DegenerateCorrelation);
}

TEST_CASE("behaviors from states are normalized and no-signaling") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 4;
    const Behavior beh = behavior_from_state(bloch_decompose(random_state(rng)), testing::random_measurements(n, rng));
    CHECK_NOTHROW(check_behavior(beh));
    const Behavior noisy = noisy_behavior(beh, 0.37);
    CHECK_NOTHROW(check_behavior(noisy));
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) CHECK(noisy.correlator(x, y) == doctest::Approx(0.37 * beh.correlator(x, y)));
  }
}

TEST_CASE("behavior Bell value matches the state Bell value") {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 50; ++k) {
    const BlochForm b = bloch_decompose(random_state(rng));
    const MeasurementSet ms = testing::random_measurements(3, rng);
    const BellCoefficients c = chained_coefficients(3);
    CHECK(bell_value(behavior_from_state(b, ms), c) == doctest::Approx(bell_value(b, ms, c)).epsilon(1e-12));
  }
}

TEST_CASE("check_behavior flags malformed tables") {
  Behavior beh = behavior_from_state(bloch_decompose(make_singlet()), canonical_measurements(2));
  Behavior signaling = beh;
  signaling.set(0, 0, 0, 0, beh.p(0, 0, 0, 0) + 0.05);
  signaling.set(0, 0, 0, 1, beh.p(0, 0, 0, 1) - 0.05);
  CHECK(code_of([&] { check_behavior(signaling); }) == ErrorCode::Signaling);

  Behavior unnormalized = beh;
  unnormalized.set(1, 1, 0, 0, beh.p(1, 1, 0, 0) + 0.2);
  CHECK(code_of([&] { check_behavior(unnormalized); }) == ErrorCode::NotNormalized);

  Behavior negative = beh;
  negative.set(0, 1, 0, 0, -0.1);
  negative.set(0, 1, 0, 1, beh.p(0, 1, 0, 1) + beh.p(0, 1, 0, 0) + 0.1);
  CHECK(code_of([&] { check_behavior(negative); }) == ErrorCode::NegativeProbability);
}

TEST_CASE("noise visibility outside [0, 1] is rejected") {
  const Behavior beh = behavior_from_state(bloch_decompose(make_singlet()), canonical_measurements(2));
  CHECK(code_of([&] { noisy_behavior(beh, 1.01); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { noisy_behavior(beh, -0.01); }) == ErrorCode::InvalidArgument);
  const Behavior flat = noisy_behavior(beh, 0.0);
  for (double v : flat.table()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("measurement vectors must be unit") {
  CHECK_THROWS_AS(MeasurementSet({Eigen::Vector3d(2, 0, 0)}, {Eigen::Vector3d(1, 0, 0)}), Error);
  CHECK(code_of([] {
    bell_value(bloch_decompose(make_singlet()), canonical_measurements(2), chained_coefficients(3));
  }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("Gram SDP reaches n cos(pi/n) with a tight dual") {
  SdpSolver solver;
  for (int n = 2; n <= 8; ++n) {
    const GramResult g = solve_gram_sdp(n, solver);
    const double expected = n * std::cos(std::numbers::pi / n);
    CHECK(g.status == SolverStatus::Optimal);
    CHECK(std::abs(g.primal - expected) <= 1e-5);
    CHECK(std::abs(g.dual - expected) <= 1e-5);
    CHECK(g.gap <= 1e-6);
  }
}

TEST_CASE("Werner witness threshold") {
  CHECK(werner_witness_threshold(2) == doctest::Approx(1.0 / std::numbers::sqrt2));
  for (int n = 2; n <= 8; ++n)
    CHECK(werner_witness_threshold(n) ==
          doctest::Approx((n - 1.0) / (n * std::cos(std::numbers::pi / (2.0 * n)))).epsilon(1e-14));
  // Increasing in n: longer chains need cleaner states.
  for (int n = 2; n < 8; ++n) CHECK(werner_witness_threshold(n + 1) > werner_witness_threshold(n));
}

TEST_CASE("J_gamma coefficients") {
  const BellCoefficients j0 = j_gamma_coefficients(0.0);
  CHECK(j0.weights(0, 0) == 1.0);
  CHECK(j0.weights(0, 1) == doctest::Approx(2.0));
  CHECK(j0.weights(1, 1) == doctest::Approx(-2.0));
  const double g = std::numbers::pi / 12.0;
  const double c = 4.0 * std::pow(std::cos(g + std::numbers::pi / 6.0), 2) - 1.0;
  CHECK(j_gamma_coefficients(g).weights(1, 0) == doctest::Approx(c));
  CHECK(code_of([] { j_gamma_coefficients(0.3); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("X-state entanglement region") {
  CHECK(xstate_entangled(0.7, 0.6));
  CHECK_FALSE(xstate_entangled(0.3, 0.2));
}
