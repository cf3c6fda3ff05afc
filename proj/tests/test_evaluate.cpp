#include <doctest.h>

#include <numeric>
#include <sstream>

#include "gpbart/errors.hpp"
#include "gpbart/evaluate.hpp"
#include "gpbart/simdata.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace gpbart;

TEST_SUITE("evaluate") {

TEST_CASE("rmse examples") {
  const Eigen::Vector2d y(0, 0), yh(3, 4);
  CHECK(rmse(y, y) == 0.0);
  CHECK(rmse(y, yh) == doctest::Approx(3.53553).epsilon(1e-5));
  const Eigen::Vector3d a(1, -2, 0.5), b(0.3, 1, 2);
  CHECK(rmse(-2.5 * a, -2.5 * b) == doctest::Approx(2.5 * rmse(a, b)).epsilon(1e-14));
  CHECK_THROWS_AS(rmse(a, yh), ValidationError);
}

TEST_CASE("crps examples") {
  CHECK(crps(std::vector<double>{1.5, 1.5, 1.5}, -0.25) == doctest::Approx(1.75));
  CHECK(crps(std::vector<double>{2.0, 2.0}, 2.0) == 0.0);
  CHECK(crps(std::vector<double>{-1.0, 1.0}, 0.0) > 0.0);
  CHECK_THROWS_AS(crps(std::vector<double>{1.0}, 0.0), ValidationError);
}

TEST_CASE("crps matches the pairwise definition") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(uniform_index(rng, 40));
    std::vector<double> xs(k);
    for (double& v : xs) {
      v = standard_normal(rng) * 2;
      if (trial % 3 == 0) v = std::round(v);  // ties
    }
    const double y = standard_normal(rng);
    CHECK(crps(xs, y) == doctest::Approx(oracle::crps_pairs(xs, y)).epsilon(1e-12));
  }
}

TEST_CASE("crps of standard normal replicates") {
  Rng rng(32);
  std::vector<double> xs(100000);
  for (double& v : xs) v = standard_normal(rng);
  const double closed = 2 * std::exp(-0.0) / std::sqrt(2 * std::numbers::pi) - 1 / std::sqrt(std::numbers::pi);
  CHECK(closed == doctest::Approx(0.23370).epsilon(1e-4));
  CHECK(std::abs(crps(xs, 0.0) - closed) < 0.005);
}

TEST_CASE("quantiles and intervals") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2);
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4}, 0.0) == 1);
  CHECK(quantile({1, 2, 3, 4}, 1.0) == 4);
  PredictionSet p;
  p.replicates.resize(1, 5);
  p.replicates << 5, 1, 4, 2, 3;
  const Interval iv = prediction_interval(p, 0.0);
  CHECK(iv.lower(0) == 3);
  CHECK(iv.upper(0) == 3);
  const Interval wide = prediction_interval(p, 0.5);
  CHECK(wide.lower(0) == 2);
  CHECK(wide.upper(0) == 4);
}

TEST_CASE("fold assignment is balanced") {
  Rng rng(33);
  for (int n : {5, 23, 100}) {
    const auto folds = assign_folds(n, 5, rng);
    std::vector<int> count(5, 0);
    for (int f : folds) ++count[f];
    CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
  }
  const auto loo = assign_folds(7, 7, rng);
  std::vector<int> sorted = loo;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> iota(7);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
  CHECK_THROWS_AS(assign_folds(3, 5, rng), ValidationError);
}

TEST_CASE("predict at training inputs reproduces the in-sample fits") {
  BenchmarkConfig cfg;
  cfg.n = 40;
  const auto sim = gen_benchmark(cfg);
  FitSettings s;
  s.trees = 3;
  s.n_mcmc = 25;
  s.n_burnin = 20;
  std::ostringstream quiet;
  RunOptions ro;
  ro.log = &quiet;
  for (Variant v : {Variant::kA, Variant::kD}) {
    const FittedModel m = fit_model(testing::make_dataset(sim.x, sim.y), s, v, 5, ro);
    const Eigen::MatrixXd dm = predict_draw_means(m.posterior, m.posterior.design.x);
    for (std::size_t d = 0; d < m.posterior.draws.size(); ++d)
      CHECK((dm.col(static_cast<Eigen::Index>(d)) - m.posterior.draws[d].fit).cwiseAbs().maxCoeff() < 1e-8);

    const auto p1 = predict(m, sim.x, 4, 77, 1);
    const auto p2 = predict(m, sim.x, 4, 77, 3);
    CHECK(p1.replicates == p2.replicates);
    CHECK(p1.mean == p2.mean);
    CHECK((p1.mean - p1.draw_means.rowwise().mean()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p1.replicates.cols() == 4 * static_cast<Eigen::Index>(m.posterior.draws.size()));
  }
}

TEST_CASE("cross-validation ranks and records") {
  BenchmarkConfig gen;
  gen.n = 30;
  const auto sim = gen_benchmark(gen);
  CvConfig cfg;
  cfg.variants = {Variant::kA, Variant::kB, Variant::kD};
  cfg.repetitions = 2;
  cfg.folds = 3;
  cfg.workers = 2;
  cfg.settings.trees = 2;
  cfg.settings.n_mcmc = 12;
  cfg.settings.n_burnin = 6;
  const CvReport rep = cross_validate(testing::make_dataset(sim.x, sim.y), cfg);
  REQUIRE(rep.records.size() == 2 * 3 * 3);
  for (std::size_t part = 0; part < 6; ++part) {
    int sum = 0, prod = 1;
    for (int v = 0; v < 3; ++v) {
      sum += rep.records[part * 3 + v].rank_rmse;
      prod *= rep.records[part * 3 + v].rank_crps;
    }
    CHECK(sum == 6);
    CHECK(prod == 6);
  }
  int test_rows = 0;
  for (const auto& r : rep.records)
    if (r.repetition == 0 && r.variant == Variant::kA) test_rows += r.n_test;
  CHECK(test_rows == 30);

  cfg.workers = 1;
  const CvReport again = cross_validate(testing::make_dataset(sim.x, sim.y), cfg);
  for (std::size_t i = 0; i < rep.records.size(); ++i) CHECK(rep.records[i].rmse == again.records[i].rmse);

  std::ostringstream os;
  rep.write_long_csv(os);
  CHECK(os.str().rfind("repetition,fold,variant,metric,value\n", 0) == 0);
}

TEST_CASE("metrics scale with the response") {
  BenchmarkConfig gen;
  gen.n = 30;
  const auto sim = gen_benchmark(gen);
  CvConfig cfg;
  cfg.variants = {Variant::kD};
  cfg.repetitions = 1;
  cfg.folds = 3;
  cfg.max_folds = 1;
  cfg.settings.trees = 2;
  cfg.settings.n_mcmc = 12;
  cfg.settings.n_burnin = 6;
  const auto a = cross_validate(testing::make_dataset(sim.x, sim.y), cfg);
  const auto b = cross_validate(testing::make_dataset(sim.x, 2.0 * sim.y), cfg);
  CHECK(b.records[0].rmse == doctest::Approx(2 * a.records[0].rmse).epsilon(1e-12));
  CHECK(b.records[0].crps == doctest::Approx(2 * a.records[0].crps).epsilon(1e-12));
}

}  // TEST_SUITE
