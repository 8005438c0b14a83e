#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chainbell/qstate.hpp"
#include "chainbell/search.hpp"
#include "support.hpp"

using namespace chainbell;
using testing::code_of;

namespace {

SwarmConfig small_swarm(std::uint64_t seed) {
  SwarmConfig cfg;
  cfg.particles = 30;
  cfg.iterations = 200;
  cfg.restarts = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("splitmix64 reference values") {
  // First two outputs of the reference generator seeded with 0.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(0x9e3779b97f4a7c15ULL) == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("unit_double covers [0, 1)") {
  CHECK(unit_double(0) == 0.0);
  CHECK(unit_double(~0ULL) < 1.0);
  CHECK(unit_double(~0ULL) > 1.0 - 1e-15);
}

TEST_CASE("bloch_vector is a unit vector") {
  for (double t : {0.0, 0.4, 1.3, std::numbers::pi})
    for (double p : {0.0, 1.0, 4.0}) CHECK(bloch_vector(t, p).norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((bloch_vector(0.0, 2.0) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("swarm finds Tsirelson on the singlet") {
  const BlochForm singlet = bloch_decompose(make_singlet());
  const SearchResult r = pso_max_violation(singlet, chained_coefficients(2), small_swarm(3));
  CHECK(r.best_value == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-8));
  CHECK(r.history.size() == 4);
  CHECK(r.evaluations > 0);
  CHECK(bell_value(singlet, r.best_measurements, chained_coefficients(2)) == doctest::Approx(r.best_value));
}

TEST_CASE("swarm result never exceeds the bound") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 5; ++k) {
    const BlochForm b = bloch_decompose(random_state(rng));
    const SearchResult r = pso_max_violation(b, chained_coefficients(3), small_swarm(k));
    CHECK(r.best_value <= theorem1_bound(b, 3) + 1e-12);
  }
}

TEST_CASE("swarm is deterministic across thread counts") {
  const BlochForm b = bloch_decompose(make_werner(0.9));
  SwarmConfig one = small_swarm(42);
  one.threads = 1;
  SwarmConfig many = one;
  many.threads = 4;
  const SearchResult a = pso_max_violation(b, chained_coefficients(3), one);
  const SearchResult c = pso_max_violation(b, chained_coefficients(3), many);
  CHECK(a.best_value == c.best_value);
  CHECK(a.history == c.history);
  const SearchResult d = pso_max_violation(b, chained_coefficients(3), small_swarm(43));
  CHECK(d.history != a.history);
}

TEST_CASE("swarm config validation") {
  SwarmConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.particles = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = SwarmConfig{};
  cfg.inertia = 0.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = SwarmConfig{};
  cfg.threads = -1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("planar grid contains the CHSH optimum") {
  const BlochForm singlet = bloch_decompose(make_singlet());
  GridOptions opts;
  opts.resolution = 8;  // multiples of pi/8 include the Tsirelson angles
  opts.planar = true;
  const SearchResult r = grid_oracle(singlet, chained_coefficients(2), opts);
  CHECK(r.best_value == doctest::Approx(2.0 * std::numbers::sqrt2).epsilon(1e-12));
}

TEST_CASE("grid optimum lower-bounds the swarm and the bound") {
  const BlochForm b = bloch_decompose(make_werner(0.8));
  GridOptions opts;
  opts.resolution = 12;
  opts.planar = true;
  const SearchResult grid = grid_oracle(b, chained_coefficients(3), opts);
  const SearchResult swarm = pso_max_violation(b, chained_coefficients(3), small_swarm(1));
  CHECK(grid.best_value <= swarm.best_value + 1e-9);
  CHECK(grid.best_value == doctest::Approx(theorem1_bound(b, 3)).epsilon(1e-9));
}

TEST_CASE("grid oracle limits") {
  const BlochForm b = bloch_decompose(make_singlet());
  GridOptions opts;
  CHECK(code_of([&] { grid_oracle(b, chained_coefficients(4), opts); }) == ErrorCode::InvalidArgument);
  opts.resolution = 0;
  CHECK(code_of([&] { grid_oracle(b, chained_coefficients(2), opts); }) == ErrorCode::InvalidArgument);
  opts.resolution = 60;
  opts.budget = 1000;
  CHECK(code_of([&] { grid_oracle(b, chained_coefficients(3), opts); }) == ErrorCode::BudgetExceeded);
}
