#include <doctest.h>

#include <random>

#include "chainbell/error.hpp"
#include "chainbell/qstate.hpp"
#include "support.hpp"

using namespace chainbell;
using testing::code_of;

TEST_CASE("singlet Bloch form") {
  const BlochForm b = bloch_decompose(make_singlet());
  CHECK(b.r.norm() < 1e-14);
  CHECK(b.s.norm() < 1e-14);
  CHECK((b.m + Eigen::Matrix3d::Identity()).norm() < 1e-14);
  const SvdReport svd = correlation_svd(b);
  CHECK(svd.sigma_max == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(svd.degeneracy == 3);
}

TEST_CASE("maximally mixed state has no correlations") {
  const BlochForm b = bloch_decompose(make_maximally_mixed());
  CHECK(b.m.norm() < 1e-15);
  CHECK(correlation_svd(b).sigma_max < 1e-15);
}

TEST_CASE("Werner sigma_max equals the visibility") {
  for (double p : {0.0, 0.3, 0.8, 1.0}) CHECK(correlation_svd(bloch_decompose(make_werner(p))).sigma_max == doctest::Approx(p));
  CHECK(code_of([] { make_werner(1.2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("X-state correlation matrix") {
  const BlochForm b = bloch_decompose(make_xstate(0.7, 0.6));
  const SvdReport svd = correlation_svd(b);
  CHECK(svd.sigma_max == doctest::Approx(0.7));
  CHECK(svd.degeneracy == 2);
  // 1 + l - 2 nu < 0 makes the state non-positive.
  CHECK(code_of([] { make_xstate(0.9, 0.2); }) == ErrorCode::NotPositive);
}

TEST_CASE("validate_state rejects malformed matrices") {
  Matrix4c rho = Matrix4c::Identity() / 4.0;
  CHECK_NOTHROW(validate_state(rho));

  Matrix4c skew = rho;
  skew(0, 1) = 0.1;
  CHECK(code_of([&] { validate_state(skew); }) == ErrorCode::NotHermitian);

  CHECK(code_of([&] { validate_state(rho * 2.0); }) == ErrorCode::TraceNotOne);

  Matrix4c neg = Matrix4c::Zero();
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  CHECK(code_of([&] { validate_state(neg); }) == ErrorCode::NotPositive);
}

TEST_CASE("compose inverts decompose on random states") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const TwoQubitState st = random_state(rng);
    const TwoQubitState back = bloch_compose(bloch_decompose(st));
    CHECK((back.rho() - st.rho()).norm() < 1e-12);
  }
}

TEST_CASE("random states are valid with sigma_max <= 1") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const TwoQubitState st = random_state(rng);
    CHECK_NOTHROW(validate_state(st.rho()));
    CHECK(correlation_svd(bloch_decompose(st)).sigma_max <= 1.0 + 1e-12);
  }
}

TEST_CASE("Rayleigh bound |x^T A y| <= sigma_max |x||y| over 1000 samples") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(1, 6);
  int failures = 0;
  for (int k = 0; k < 1000; ++k) {
    const int r = dim(rng), c = dim(rng);
    Eigen::MatrixXd a(r, c);
    Eigen::VectorXd x(r), y(c);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (int i = 0; i < r; ++i) x(i) = g(rng);
    for (int i = 0; i < c; ++i) y(i) = g(rng);
    const RayleighBound rb = rayleigh_singular_bound(a, x, y);
    if (!rb.holds || rb.lhs > rb.rhs * (1 + 1e-12) + 1e-15) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("Rayleigh bound is attained by the top singular pair") {
  Eigen::MatrixXd a(2, 3);
  a << 3, 0, 0, 0, 1, 0;
  const RayleighBound rb = rayleigh_singular_bound(a, Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 0, 0));
  CHECK(rb.lhs == doctest::Approx(3.0));
  CHECK(rb.rhs == doctest::Approx(3.0));
  CHECK(code_of([&] { rayleigh_singular_bound(a, Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(1, 0, 0)); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("degeneracy tolerance must be positive") {
  CHECK(code_of([] { correlation_svd(bloch_decompose(make_singlet()), 0.0); }) == ErrorCode::InvalidArgument);
}
