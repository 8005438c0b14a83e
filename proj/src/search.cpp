#include "chainbell/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include <Eigen/Geometry>

#include "chainbell/error.hpp"

namespace chainbell {

void SwarmConfig::validate() const {
  if (particles < 1 || iterations < 1 || restarts < 1)
    throw Error(ErrorCode::InvalidArgument, "swarm counts must be >= 1");
  if (!(inertia > 0.0) || !(cognitive > 0.0) || !(social > 0.0))
    throw Error(ErrorCode::InvalidArgument, "swarm coefficients must be > 0");
  if (threads < 0) throw Error(ErrorCode::InvalidArgument, "thread count must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double unit_double(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

Eigen::Vector3d bloch_vector(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kStallWindow = 50;
constexpr double kStallGain = 1e-10;

void check_shapes(const BellCoefficients& coeffs) {
  if (coeffs.n_a() < 1 || coeffs.n_b() < 1)
    throw Error(ErrorCode::InvalidArgument, "Bell coefficients need at least one setting per party");
}

// sum_xy w_xy a_x^T M b_y with vectors read from (theta, phi) pairs,
// Alice's observables first.
class Objective {
 public:
  Objective(const BlochForm& b, const BellCoefficients& coeffs, const Eigen::Matrix3d& chart = Eigen::Matrix3d::Identity())
      : m_(chart.transpose() * b.m * chart), chart_(chart), w_(coeffs.weights) {}

  int dims() const { return 2 * static_cast<int>(w_.rows() + w_.cols()); }

  double operator()(const Eigen::VectorXd& angles) const {
    const Eigen::Index na = w_.rows();
    const Eigen::Index nb = w_.cols();
    Eigen::Matrix3Xd mb(3, nb);
    for (Eigen::Index y = 0; y < nb; ++y) mb.col(y) = m_ * bloch_vector(angles(2 * (na + y)), angles(2 * (na + y) + 1));
    double total = 0.0;
    for (Eigen::Index x = 0; x < na; ++x) {
      const Eigen::Vector3d a = bloch_vector(angles(2 * x), angles(2 * x + 1));
      total += a.dot(mb * w_.row(x).transpose());
    }
    return total;
  }

  MeasurementSet measurements(const Eigen::VectorXd& angles) const {
    std::vector<Eigen::Vector3d> alice, bob;
    for (Eigen::Index x = 0; x < w_.rows(); ++x)
      alice.push_back((chart_ * bloch_vector(angles(2 * x), angles(2 * x + 1))).normalized());
    for (Eigen::Index y = 0; y < w_.cols(); ++y) {
      const Eigen::Index k = w_.rows() + y;
      bob.push_back((chart_ * bloch_vector(angles(2 * k), angles(2 * k + 1))).normalized());
    }
    return MeasurementSet(std::move(alice), std::move(bob));
  }

 private:
  Eigen::Matrix3d m_;  // correlation matrix seen through the chart
  Eigen::Matrix3d chart_;
  Eigen::MatrixXd w_;
};

// Uniformly random rotation from a normalized quaternion.
Eigen::Matrix3d random_rotation(const std::function<double()>& uniform) {
  Eigen::Vector4d q;
  for (;;) {
    for (int i = 0; i < 4; ++i) q(i) = 2.0 * uniform() - 1.0;
    const double n = q.norm();
    if (n > 1e-3 && n <= 1.0) break;
  }
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

struct RestartOutcome {
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd position;
  Eigen::Matrix3d chart = Eigen::Matrix3d::Identity();
  long long evaluations = 0;
};

// Each restart searches in its own randomly rotated angle chart, so the
// polar singularity and the chart-aligned saddles move between restarts.
RestartOutcome run_restart(const BlochForm& b, const BellCoefficients& coeffs, const SwarmConfig& cfg, int restart) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(restart) + 1)));
  const std::function<double()> uniform = [&rng] { return unit_double(rng()); };
  RestartOutcome out;
  out.chart = restart == 0 ? Eigen::Matrix3d::Identity() : random_rotation(uniform);
  const Objective f(b, coeffs, out.chart);

  const int dims = f.dims();
  Eigen::VectorXd lo(dims), hi(dims);
  for (int k = 0; k < dims; k += 2) {
    lo(k) = 0.0;
    hi(k) = kPi;
    lo(k + 1) = 0.0;
    hi(k + 1) = 2.0 * kPi;
  }
  const Eigen::VectorXd vmax = 0.5 * (hi - lo);

  const int np = cfg.particles;
  Eigen::MatrixXd pos(dims, np), vel(dims, np), pbest(dims, np);
  Eigen::VectorXd pbest_val(np);
  for (int i = 0; i < np; ++i) {
    for (int k = 0; k < dims; ++k) {
      pos(k, i) = lo(k) + uniform() * (hi(k) - lo(k));
      vel(k, i) = (2.0 * uniform() - 1.0) * vmax(k);
    }
    pbest.col(i) = pos.col(i);
    pbest_val(i) = f(pos.col(i));
    ++out.evaluations;
    if (pbest_val(i) > out.best) {
      out.best = pbest_val(i);
      out.position = pos.col(i);
    }
  }

  std::vector<double> trail{out.best};
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int i = 0; i < np; ++i) {
      for (int k = 0; k < dims; ++k) {
        double v = cfg.inertia * vel(k, i) + cfg.cognitive * uniform() * (pbest(k, i) - pos(k, i)) +
                   cfg.social * uniform() * (out.position(k) - pos(k, i));
        v = std::clamp(v, -vmax(k), vmax(k));
        double x = pos(k, i) + v;
        if (x < lo(k)) {
          x = lo(k) + (lo(k) - x);
          v = -v;
        } else if (x > hi(k)) {
          x = hi(k) - (x - hi(k));
          v = -v;
        }
        pos(k, i) = std::clamp(x, lo(k), hi(k));
        vel(k, i) = v;
      }
      const double val = f(pos.col(i));
      ++out.evaluations;
      if (val > pbest_val(i)) {
        pbest_val(i) = val;
        pbest.col(i) = pos.col(i);
      }
    }
    Eigen::Index arg;
    const double top = pbest_val.maxCoeff(&arg);
    if (top > out.best) {
      out.best = top;
      out.position = pbest.col(arg);
    }
    trail.push_back(out.best);
    if (static_cast<int>(trail.size()) > kStallWindow &&
        out.best - trail[trail.size() - 1 - kStallWindow] < kStallGain)
      break;
  }
  return out;
}

}  // namespace

SearchResult pso_max_violation(const BlochForm& b, const BellCoefficients& coeffs, const SwarmConfig& cfg) {
  cfg.validate();
  check_shapes(coeffs);
  std::vector<RestartOutcome> runs(static_cast<std::size_t>(cfg.restarts));
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = std::min(cfg.restarts, cfg.threads > 0 ? cfg.threads : hw);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < cfg.restarts; r = next++) runs[static_cast<std::size_t>(r)] = run_restart(b, coeffs, cfg, r);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  }

  SearchResult res;
  std::size_t best = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    res.history.push_back(runs[r].best);
    res.evaluations += runs[r].evaluations;
    if (runs[r].best > runs[best].best) best = r;
  }
  res.best_measurements = Objective(b, coeffs, runs[best].chart).measurements(runs[best].position);
  res.best_value = bell_value(b, res.best_measurements, coeffs);
  return res;
}

SearchResult grid_oracle(const BlochForm& b, const BellCoefficients& coeffs, const GridOptions& opts) {
  check_shapes(coeffs);
  const int na = coeffs.n_a();
  const int nb = coeffs.n_b();
  if (na > 3 || nb > 3) throw Error(ErrorCode::InvalidArgument, "grid oracle supports at most 3 settings per party");
  if (opts.resolution < 1 || opts.resolution > 60)
    throw Error(ErrorCode::InvalidArgument, "grid resolution must lie in 1..60");

  // Angular step pi/resolution: planar vectors go once round the x-z
  // circle, spatial ones cover theta in [0, pi] and phi in [0, 2 pi).
  const double step = kPi / opts.resolution;
  std::vector<Eigen::Vector3d> grid;
  if (opts.planar) {
    for (int k = 0; k < 2 * opts.resolution; ++k) grid.push_back(bloch_vector(k * step, 0.0));
  } else {
    grid.push_back(bloch_vector(0.0, 0.0));
    for (int t = 1; t < opts.resolution; ++t)
      for (int p = 0; p < 2 * opts.resolution; ++p) grid.push_back(bloch_vector(t * step, p * step));
    grid.push_back(bloch_vector(kPi, 0.0));
  }

  const long long g = static_cast<long long>(grid.size());
  long double bob_configs = 1.0L;
  for (int y = 0; y < nb; ++y) bob_configs *= static_cast<long double>(g);
  const long double cost = bob_configs * na * g;
  if (cost > static_cast<long double>(opts.budget))
    throw Error(ErrorCode::BudgetExceeded, "grid needs " + std::to_string(static_cast<double>(cost)) +
                                               " evaluations, budget " + std::to_string(opts.budget));

  Eigen::Matrix3Xd grid_mat(3, g);
  for (long long i = 0; i < g; ++i) grid_mat.col(i) = grid[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd projected = (b.m * grid_mat).eval();  // M b for every grid vector

  SearchResult res;
  res.best_value = -std::numeric_limits<double>::infinity();
  std::vector<long long> bob_idx(nb, 0), best_bob(nb, 0), best_alice(na, 0);
  std::vector<long long> alice_idx(na, 0);
  Eigen::Matrix3Xd field(3, na);
  for (;;) {
    field.setZero();
    for (int x = 0; x < na; ++x)
      for (int y = 0; y < nb; ++y)
        if (coeffs.weights(x, y) != 0.0) field.col(x) += coeffs.weights(x, y) * projected.col(bob_idx[y]);
    const Eigen::MatrixXd scores = grid_mat.transpose() * field;  // g x na
    double total = 0.0;
    for (int x = 0; x < na; ++x) {
      Eigen::Index arg;
      total += scores.col(x).maxCoeff(&arg);
      alice_idx[x] = arg;
    }
    res.evaluations += na * g;
    if (total > res.best_value) {
      res.best_value = total;
      best_bob = bob_idx;
      best_alice = alice_idx;
    }
    int y = 0;
    while (y < nb && ++bob_idx[y] == g) bob_idx[y++] = 0;
    if (y == nb) break;
  }

  std::vector<Eigen::Vector3d> alice, bob;
  for (int x = 0; x < na; ++x) alice.push_back(grid[static_cast<std::size_t>(best_alice[x])]);
  for (int y = 0; y < nb; ++y) bob.push_back(grid[static_cast<std::size_t>(best_bob[y])]);
  res.best_measurements = MeasurementSet(std::move(alice), std::move(bob));
  res.best_value = bell_value(b, res.best_measurements, coeffs);
  res.history.push_back(res.best_value);
  return res;
}

}  // namespace chainbell
