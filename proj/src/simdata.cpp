#include "gpbart/simdata.hpp"

#include <vector>

#include "gpbart/errors.hpp"
#include "gpbart/gp.hpp"
#include "gpbart/rng.hpp"

namespace gpbart {

// X and the spatial terms come from one substream and the noise from another,
// so (X, truth) depend only on the seed.
namespace {
enum Stream : std::uint64_t { kCovariates = 0, kNoise = 1 };
}

int benchmark_region(int component, double x1, double x2) {
  switch (component) {
    case 0: return x1 <= x2 ? 0 : 1;
    case 1: return x1 <= -x2 ? 0 : 1;
    default: return x1 <= 0.0 ? 0 : 1;
  }
}

double benchmark_mean(const BenchmarkConfig& cfg, double x1, double x2) {
  double m = 0.0;
  for (int t = 0; t < 3; ++t) m += cfg.means[t][benchmark_region(t, x1, x2)];
  return m;
}

SimulatedData gen_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.n < 2) throw ValidationError("benchmark generator needs n >= 2");
  Rng rng(derive_seed(cfg.seed, {kCovariates}));
  Rng noise_rng(derive_seed(cfg.seed, {kNoise}));
  const int n = cfg.n;
  SimulatedData out;
  out.x.resize(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) out.x(i, j) = uniform(rng, -1.0, 1.0);

  out.truth = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd phi = Eigen::VectorXd::Constant(2, cfg.phi);
  for (int t = 0; t < 3; ++t) {
    for (int region = 0; region < 2; ++region) {
      std::vector<int> rows;
      for (int i = 0; i < n; ++i)
        if (benchmark_region(t, out.x(i, 0), out.x(i, 1)) == region) rows.push_back(i);
      if (rows.empty()) continue;
      const Eigen::MatrixXd xr = out.x(rows, Eigen::all);
      const Eigen::MatrixXd omega = build_omega(xr, phi, cfg.nu, 0.0);
      const Eigen::VectorXd s = sample_mvn_zero_mean<double>(omega, rng);
      for (std::size_t i = 0; i < rows.size(); ++i)
        out.truth(rows[i]) += cfg.means[t][region] + s(static_cast<Eigen::Index>(i));
    }
  }
  const double sd = 1.0 / std::sqrt(cfg.tau);
  out.y = out.truth;
  for (int i = 0; i < n; ++i) out.y(i) += sd * standard_normal(noise_rng);
  return out;
}

SimulatedData gen_friedman(const FriedmanConfig& cfg) {
  if (cfg.p < 5) throw ValidationError("Friedman generator needs p >= 5");
  if (cfg.n < 1) throw ValidationError("Friedman generator needs n >= 1");
  Rng rng(derive_seed(cfg.seed, {kCovariates}));
  Rng noise_rng(derive_seed(cfg.seed, {kNoise}));
  SimulatedData out;
  out.x.resize(cfg.n, cfg.p);
  for (int i = 0; i < cfg.n; ++i)
    for (int j = 0; j < cfg.p; ++j) out.x(i, j) = uniform01(rng);
  out.truth.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) out.truth(i) = friedman_mean(out.x.row(i));
  const double sd = 1.0 / std::sqrt(cfg.tau);
  out.y = out.truth;
  for (int i = 0; i < cfg.n; ++i) out.y(i) += sd * standard_normal(noise_rng);
  return out;
}

}  // namespace gpbart
