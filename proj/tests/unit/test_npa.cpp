#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chainbell/npa.hpp"
#include "chainbell/qstate.hpp"
#include "support.hpp"

using namespace chainbell;
using testing::code_of;

namespace {

Behavior ideal(int n) { return behavior_from_state(bloch_decompose(make_singlet()), canonical_measurements(n)); }

}  // namespace

TEST_CASE("level names round-trip") {
  for (NpaLevel l : {NpaLevel::Q1, NpaLevel::OnePlusAB, NpaLevel::Q2}) CHECK(parse_level(to_string(l)) == l);
  CHECK(parse_level("1+AB") == NpaLevel::OnePlusAB);
  CHECK(code_of([] { parse_level("q3"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("word reduction") {
  const Scenario s{2, 2};
  // Bob's projector id is n_a + y.
  CHECK(reduce_word({2, 0}, s) == Word{0, 2});
  CHECK(reduce_word({0, 0, 2}, s) == Word{0, 2});
  CHECK(reduce_word({0, 2, 0}, s) == Word{0, 2});
  CHECK(reduce_word({0, 1}, s) == Word{0, 1});
  CHECK(canonical_word({1, 0}, s) == canonical_word({0, 1}, s));
}

TEST_CASE("monomial basis sizes for n = 3") {
  const Scenario s{3, 3};
  CHECK(build_basis(s, NpaLevel::Q1).words.size() == 7);
  CHECK(build_basis(s, NpaLevel::OnePlusAB).words.size() == 16);
  CHECK(build_basis(s, NpaLevel::Q2).words.size() == 28);
  const MomentMatrix mm = build_moment_matrix(build_basis(s, NpaLevel::Q1));
  CHECK(mm.dim() == 7);
  CHECK(mm.entry(0, 0) == mm.identity());
  CHECK(mm.entry(0, 4) == mm.bob(0));
  CHECK(mm.entry(1, 4) == mm.joint(0, 0));
}

TEST_CASE("relaxations of correlation inequalities reach Tsirelson at Q1") {
  CHECK(relaxation_max({2, 2}, chained_coefficients(2), NpaLevel::Q1) ==
        doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-6));
  CHECK(relaxation_max({3, 3}, chained_coefficients(3), NpaLevel::Q1) ==
        doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-6));
  CHECK(relaxation_max({3, 3}, chained_coefficients(3), NpaLevel::OnePlusAB) ==
        doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-6));
}

TEST_CASE("min-entropy") {
  CHECK(min_entropy(1.0) == 0.0);
  CHECK(min_entropy(0.25) == doctest::Approx(2.0));
  CHECK(min_entropy(1.0 + 5e-10) == 0.0);
  CHECK(code_of([] { min_entropy(0.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { min_entropy(1.1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("CHSH at Tsirelson certifies the self-testing guess probability") {
  const CertResult r =
      max_prob_given_violation({2, 2}, chained_coefficients(2), 2.0 * std::numbers::sqrt2, {0, 0}, NpaLevel::OnePlusAB);
  CHECK(r.solver_status == SolverStatus::Optimal);
  CHECK(r.p_guess == doctest::Approx((1.0 + 1.0 / std::numbers::sqrt2) / 4.0).epsilon(1e-5));
  CHECK(r.per_outcome.size() == 4);
}

TEST_CASE("chained n = 3 at maximal violation gives about 1.1 bits at Q2") {
  const CertResult r =
      max_prob_given_violation({3, 3}, chained_coefficients(3), 3.0 * std::sqrt(3.0), {0, 0}, NpaLevel::Q2);
  CHECK(std::abs(r.min_entropy_bits - 1.1) <= 0.05);
  CHECK(std::abs(r.p_guess - (1.0 + std::cos(std::numbers::pi / 6.0)) / 4.0) <= 2e-3);
}

TEST_CASE("full statistics on an uncorrelated pair certifies two bits") {
  const CertResult r = max_guess_full_statistics({3, 3}, ideal(3), {0, 1}, NpaLevel::OnePlusAB);
  CHECK(r.constraint_mode == ConstraintMode::FullStatistics);
  CHECK(r.p_guess <= 0.27);
  CHECK(r.gamma.size() == 4);
}

TEST_CASE("local behaviors certify nothing") {
  const Behavior local = noisy_behavior(ideal(3), 0.5);
  const CertResult full = max_guess_full_statistics({3, 3}, local, {0, 0}, NpaLevel::Q1);
  CHECK(full.p_guess == doctest::Approx(1.0).epsilon(1e-6));
  const CertResult viol =
      max_prob_given_violation({3, 3}, chained_coefficients(3), bell_value(local, chained_coefficients(3)), {0, 0},
                               NpaLevel::Q1);
  CHECK(viol.min_entropy_bits <= 1e-6);
}

TEST_CASE("violation-only randomness grows with visibility") {
  const BellCoefficients c = chained_coefficients(3);
  double prev = -1.0;
  for (double p : {0.75, 0.8, 0.85, 0.9, 0.95, 1.0}) {
    const double i = bell_value(noisy_behavior(ideal(3), p), c);
    const double h = max_prob_given_violation({3, 3}, c, i, {0, 0}, NpaLevel::Q1).min_entropy_bits;
    CHECK(h >= prev - 1e-7);
    prev = h;
  }
}

TEST_CASE("higher levels never certify less") {
  const Behavior beh = noisy_behavior(ideal(3), 0.9);
  const double q1 = max_guess_full_statistics({3, 3}, beh, {0, 0}, NpaLevel::Q1).min_entropy_bits;
  const double ab = max_guess_full_statistics({3, 3}, beh, {0, 0}, NpaLevel::OnePlusAB).min_entropy_bits;
  const double q2 = max_guess_full_statistics({3, 3}, beh, {0, 0}, NpaLevel::Q2).min_entropy_bits;
  CHECK(ab >= q1 - 1e-6);
  CHECK(q2 >= ab - 1e-6);
}

TEST_CASE("all-settings sweep reports the worst pair") {
  const SettingSweep sweep = full_statistics_all_settings({2, 2}, ideal(2), NpaLevel::Q1);
  REQUIRE(sweep.per_setting.size() == 4);
  double worst = 0.0;
  for (const auto& r : sweep.per_setting) worst = std::max(worst, r.p_guess);
  CHECK(sweep.worst.p_guess == doctest::Approx(worst));
}

TEST_CASE("certifier input errors") {
  const BellCoefficients c = chained_coefficients(3);
  CHECK(code_of([&] { max_prob_given_violation({3, 3}, c, 5.5, {0, 0}, NpaLevel::Q1); }) == ErrorCode::Infeasible);
  CHECK(code_of([&] { max_prob_given_violation({3, 3}, c, 4.0, {3, 0}, NpaLevel::Q1); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { max_prob_given_violation({2, 2}, c, 2.0, {0, 0}, NpaLevel::Q1); }) ==
        ErrorCode::DimensionMismatch);

  Behavior signaling = ideal(2);
  signaling.set(0, 0, 0, 0, signaling.p(0, 0, 0, 0) + 0.05);
  signaling.set(0, 0, 0, 1, signaling.p(0, 0, 0, 1) - 0.05);
  CHECK(code_of([&] { max_guess_full_statistics({2, 2}, signaling, {0, 0}, NpaLevel::Q1); }) ==
        ErrorCode::Signaling);

  // PR box: no-signaling but outside the quantum set.
  Behavior pr(2, 2);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) pr.set(x, y, a, b, ((a ^ b) == (x & y)) ? 0.5 : 0.0);
  CHECK(code_of([&] { max_guess_full_statistics({2, 2}, pr, {0, 0}, NpaLevel::Q1); }) == ErrorCode::Infeasible);
}
