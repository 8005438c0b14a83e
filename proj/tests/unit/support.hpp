#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <doctest.h>

#include "chainbell/chained.hpp"
#include "chainbell/error.hpp"

namespace testing {

// Code of the chainbell::Error thrown by f; fails the test if none is thrown.
inline chainbell::ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const chainbell::Error& e) {
    return e.code();
  }
  FAIL("expected a chainbell::Error");
  return chainbell::ErrorCode::InvalidArgument;
}

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector3d v(g(rng), g(rng), g(rng));
  return v / v.norm();
}

inline chainbell::MeasurementSet random_measurements(int n, std::mt19937_64& rng) {
  std::vector<Eigen::Vector3d> a, b;
  for (int i = 0; i < n; ++i) a.push_back(random_unit(rng));
  for (int i = 0; i < n; ++i) b.push_back(random_unit(rng));
  return {a, b};
}

}  // namespace testing
