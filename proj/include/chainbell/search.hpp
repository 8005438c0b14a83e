#pragma once

#include <cstdint>
#include <vector>

#include "chainbell/chained.hpp"
#include "chainbell/qstate.hpp"

namespace chainbell {

struct SwarmConfig {
  int particles = 50;
  int iterations = 500;
  double inertia = 0.729;
  double cognitive = 1.49445;
  double social = 1.49445;
  int restarts = 10;
  std::uint64_t seed = 1;
  /// Restart-level parallelism; 0 picks the hardware concurrency.
  int threads = 0;

  /// Throws InvalidArgument on non-positive counts or coefficients.
  void validate() const;
};

struct SearchResult {
  double best_value = 0.0;
  MeasurementSet best_measurements{{}, {}};
  std::vector<double> history;  // best value of each restart
  long long evaluations = 0;
};

/// SplitMix64 finalizer; derives per-restart streams from (seed, index).
std::uint64_t splitmix64(std::uint64_t x);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
double unit_double(std::uint64_t bits);

/// Bloch vector at polar angle theta, azimuth phi.
Eigen::Vector3d bloch_vector(double theta, double phi);

/// Particle swarm over (theta, phi) per observable. Deterministic for a
/// given config regardless of thread count.
SearchResult pso_max_violation(const BlochForm& b, const BellCoefficients& coeffs, const SwarmConfig& cfg);

struct GridOptions {
  int resolution = 24;  // angular spacing pi / resolution
  bool planar = false;  // restrict every vector to the x-z plane
  long long budget = 100000000;
};

/// Exhaustive search over the angular grid. Bob's vectors run over the full
/// product grid; Alice's settings decouple for fixed Bob vectors, so each is
/// maximized on its own, which gives the product-grid optimum exactly.
/// Throws InvalidArgument (n > 3, resolution outside 1..60) or BudgetExceeded.
SearchResult grid_oracle(const BlochForm& b, const BellCoefficients& coeffs, const GridOptions& opts = {});

}  // namespace chainbell
