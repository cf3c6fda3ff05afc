#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

namespace gpbart {

struct SimulatedData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd truth;  // y without the observation noise
};

// Three additive two-region trees over x in [-1,1]^2 with region boundaries
// x1 <= x2, x1 <= -x2 and x1 <= 0. Each region adds a constant mean and a
// spatial MVN(0, Omega(phi, nu)) term; global N(0, 1/tau) noise on top.
struct BenchmarkConfig {
  int n = 100;
  // means[t] = {region x1 <= boundary, region x1 > boundary} for component t
  std::array<std::array<double, 2>, 3> means{{{-10.0, 5.0}, {0.0, 20.0}, {10.0, -15.0}}};
  double phi = 3.0;
  double nu = 0.1;
  double tau = 10.0;
  std::uint64_t seed = 1;
};

// Region index (0 = "<=" side, 1 = ">" side) of component t for a point.
int benchmark_region(int component, double x1, double x2);

// Sum of the three region means at a point.
double benchmark_mean(const BenchmarkConfig& cfg, double x1, double x2);

SimulatedData gen_benchmark(const BenchmarkConfig& cfg);

struct FriedmanConfig {
  int n = 500;
  int p = 5;
  double tau = 100.0;
  std::uint64_t seed = 1;
};

// 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5; any further columns
// are ignored.
template <typename Derived>
double friedman_mean(const Eigen::MatrixBase<Derived>& x) {
  constexpr double pi = 3.14159265358979323846;
  return 10.0 * std::sin(pi * x(0) * x(1)) + 20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) +
         5.0 * x(4);
}

SimulatedData gen_friedman(const FriedmanConfig& cfg);

}  // namespace gpbart
