// Acceptance suite: `gpbart_acceptance N` checks criterion N (1..10) and
// prints one PASS/FAIL line; with no argument every criterion runs.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "gpbart/cli.hpp"
#include "gpbart/evaluate.hpp"
#include "gpbart/gp.hpp"
#include "gpbart/io.hpp"
#include "gpbart/simdata.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace gpbart;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd random_points(int n, int p, Rng& rng) {
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = uniform01(rng);
  return x;
}

Dataset to_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return testing::make_dataset(x, y);
}

Outcome marginal_likelihood_oracle() {
  Stopwatch clock;
  Rng rng(1001);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 4));
    const Eigen::MatrixXd x = random_points(n, 2, rng);
    const Eigen::Vector2d phi(uniform(rng, 0.1, 10), uniform(rng, 0.1, 10));
    const double tau = uniform(rng, 0.5, 200), nu = uniform(rng, 4, 400), tau_mu = uniform(rng, 4, 400);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = 0.3 * standard_normal(rng);
    const auto bundle = make_bundle(x, KernelState<double>{phi, nu, tau_mu, 1e-8}, tau);
    const double q = oracle::quadrature_log_marginal(r, x, phi, nu, tau_mu, tau, bundle.nugget);
    worst = std::max(worst, std::abs(log_marginal_node_likelihood(r, bundle) - q));
  }
  const double t = clock.seconds();
  return {worst <= 1e-6 && t < 10, fmt("max |closed form - quadrature| = %.3g over 100 nodes (tol 1e-6), %.2f s", worst, t)};
}

Outcome conditioning_oracle() {
  Stopwatch clock;
  Rng rng(1002);
  double worst_post = 0, worst_pred = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 8));
    const int m = 1 + static_cast<int>(uniform_index(rng, 4));
    const Eigen::MatrixXd x = random_points(n, 2, rng);
    const Eigen::MatrixXd xs = random_points(m, 2, rng);
    const Eigen::Vector2d phi(uniform(rng, 0.1, 2), uniform(rng, 0.1, 2));
    const double tau = uniform(rng, 1, 100);
    const KernelState<double> k{phi, 10, 10, 1e-6};

    // Node values given residuals: joint of (r, psi).
    const auto bundle = make_bundle(x, k, tau);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = 0.3 * standard_normal(rng);
    oracle::LMat lambda = oracle::omega(x, phi, k.nu, bundle.nugget);
    lambda.array() += 1.0L / k.tau_mu;
    oracle::LMat joint(2 * n, 2 * n);
    joint << lambda, lambda, lambda, lambda;
    joint.topLeftCorner(n, n).diagonal().array() += 1.0L / tau;
    const auto ref_post = oracle::condition_on_first(joint, n, r);
    const auto post = node_posterior(r, bundle);
    worst_post = std::max({worst_post, (post.mean - ref_post.mean).cwiseAbs().maxCoeff(),
                           (post.cov - ref_post.cov).cwiseAbs().maxCoeff()});

    // Test-point values given node values: joint of (psi, psi*).
    Eigen::VectorXd psi(n);
    for (int i = 0; i < n; ++i) psi(i) = 0.3 * standard_normal(rng);
    Eigen::MatrixXd all(n + m, 2);
    all << x, xs;
    oracle::LMat joint2 = oracle::omega(all, phi, k.nu, k.nugget);
    joint2.array() += 1.0L / k.tau_mu;
    const auto ref_pred = oracle::condition_schur(joint2, n, psi);
    const auto pred = gp_predict(psi, x, xs, k);
    worst_pred = std::max({worst_pred, (pred.mean - ref_pred.mean).cwiseAbs().maxCoeff(),
                           (pred.cov - ref_pred.cov).cwiseAbs().maxCoeff()});
  }
  const double t = clock.seconds();
  return {worst_post <= 1e-8 && worst_pred <= 1e-8 && t < 10,
          fmt("max deviation: node posterior %.3g, predictive %.3g over 100 instances (tol 1e-8), %.2f s",
              worst_post, worst_pred, t)};
}

Outcome induced_prior() {
  Stopwatch clock;
  Rng rng(1003);
  bool ok = true;
  std::string detail;
  for (int trees : {1, 10}) {
    const double prec = 4 * 2.0 * 2.0 * trees;
    const Eigen::MatrixXd x = random_points(5, 2, rng);
    const KernelState<double> kern{Eigen::Vector2d(1, 1), prec, prec, 1e-8};
    const int reps = 10000;
    double s2 = 0;
    for (int r = 0; r < reps; ++r) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
      for (int t = 0; t < trees; ++t) sum += sample_prior_psi(x, kern, rng);
      s2 += sum.squaredNorm() / 5;
    }
    const double target = trees * (1 / prec + 1 / prec);
    const double rel = s2 / reps / target - 1;
    ok = ok && std::abs(rel) < 0.1;
    detail += fmt("T=%d: var %.5f vs %.5f (%+.1f%%); ", trees, s2 / reps, target, 100 * rel);
  }
  const double t = clock.seconds();
  return {ok && t < 30, detail + fmt("%.2f s", t)};
}

Dataset benchmark_data() {
  BenchmarkConfig cfg;
  cfg.n = 100;
  cfg.seed = 1;
  const SimulatedData sim = gen_benchmark(cfg);
  return to_dataset(sim.x, sim.y);
}

Outcome ablation_table() {
  Stopwatch clock;
  CvConfig cfg;
  cfg.repetitions = 1;
  cfg.folds = 5;
  cfg.seed = 1;
  cfg.workers = default_workers();
  const CvReport report = cross_validate(benchmark_data(), cfg);
  const auto s = report.summary();  // A, B, C, D
  const auto& a = s[0];
  const auto& b = s[1];
  const auto& c = s[2];
  const auto& d = s[3];
  const bool d_best = d.median_rmse < std::min({a.median_rmse, b.median_rmse, c.median_rmse}) &&
                      d.median_crps < std::min({a.median_crps, b.median_crps, c.median_crps});
  const bool d_band = std::abs(d.median_rmse / 3.89 - 1) <= 0.3;
  const bool a_band = std::abs(a.median_rmse / 8.15 - 1) <= 0.3;
  const bool order = std::max(b.median_rmse, c.median_rmse) < a.median_rmse &&
                     std::max(b.median_crps, c.median_crps) < a.median_crps;
  const double t = clock.seconds();
  std::string detail = "median RMSE/CRPS";
  for (const auto& v : s)
    detail += fmt(" %c %.3f/%.3f", variant_letter(v.variant), v.median_rmse, v.median_crps);
  detail += fmt("; D best %s, D in 3.89+-30%% %s, A in 8.15+-30%% %s, B,C beat A %s, %.0f s",
                d_best ? "yes" : "no", d_band ? "yes" : "no", a_band ? "yes" : "no",
                order ? "yes" : "no", t);
  return {d_best && d_band && a_band && order && t <= 1800, detail};
}

Outcome move_acceptance() {
  Stopwatch clock;
  FitSettings settings;
  const FittedModel model = fit_model(benchmark_data(), settings, Variant::kD, 1);
  const MoveStats& st = model.posterior.retained_stats;
  bool ok = true;
  std::string detail = "rates";
  for (MoveKind k : kAllMoves) {
    ok = ok && st.rate(k) >= 0.05 && st.rate(k) <= 0.30;
    detail += fmt(" %s %.3f", std::string(move_name(k)).c_str(), st.rate(k));
  }
  const auto within2 = [](double a, double b) { return a > 0 && b > 0 && a / b <= 2 && b / a <= 2; };
  const bool paired = within2(st.rate(MoveKind::kGrowProject), st.rate(MoveKind::kGrow)) &&
                      within2(st.rate(MoveKind::kChangeProject), st.rate(MoveKind::kChange));
  detail += fmt("; all in [0.05,0.30] %s, project within x2 %s, %.0f s", ok ? "yes" : "no",
                paired ? "yes" : "no", clock.seconds());
  return {ok && paired, detail};
}

SimulatedData friedman10() {
  FriedmanConfig cfg;
  cfg.n = 500;
  cfg.p = 10;
  cfg.seed = 1;
  return gen_friedman(cfg);
}

Outcome ard() {
  Stopwatch clock;
  const SimulatedData sim = friedman10();
  CvConfig cfg;
  cfg.variants = {Variant::kD};
  cfg.repetitions = 1;
  cfg.folds = 5;
  cfg.max_folds = 1;
  cfg.seed = 1;
  cfg.workers = default_workers();
  cfg.keep_phi_min = true;
  const CvReport report = cross_validate(to_dataset(sim.x, sim.y), cfg);
  const Eigen::MatrixXd& mp = report.records.at(0).min_phi;  // draws x 10
  int separated = 0;
  for (Eigen::Index m = 0; m < mp.rows(); ++m)
    separated += mp.row(m).segment(5, 5).minCoeff() > mp.row(m).head(3).maxCoeff();
  const double frac = static_cast<double>(separated) / static_cast<double>(mp.rows());
  std::string medians;
  for (int j = 0; j < 10; ++j) {
    std::vector<double> col(mp.col(j).data(), mp.col(j).data() + mp.rows());
    medians += fmt("%s%.2g", j ? "," : "", median(col));
  }
  const double t = clock.seconds();
  return {frac > 0.5 && t <= 1200,
          fmt("draws with every noise-dim min phi above every signal-dim (1-3) min phi: %d/%d (%.3f); "
              "median min phi by dim [%s], %.0f s",
              separated, static_cast<int>(mp.rows()), frac, medians.c_str(), t)};
}

Outcome friedman_robustness() {
  Stopwatch clock;
  const SimulatedData sim = friedman10();
  CvConfig cfg;
  cfg.variants = {Variant::kD};
  cfg.repetitions = 1;
  cfg.folds = 5;
  cfg.seed = 1;
  cfg.workers = default_workers();
  // Same rows and folds; the p=5 data are the first five columns.
  const double r5 = cross_validate(to_dataset(sim.x.leftCols(5), sim.y), cfg).summary()[0].median_rmse;
  const double r10 = cross_validate(to_dataset(sim.x, sim.y), cfg).summary()[0].median_rmse;
  return {r10 < 1.25 * r5, fmt("median test RMSE p=5 %.4f, p=10 %.4f, ratio %.3f (limit 1.25), %.0f s",
                               r5, r10, r10 / r5, clock.seconds())};
}

Outcome crps_estimator() {
  Rng rng(1008);
  std::vector<double> xs(100000);
  for (double& v : xs) v = standard_normal(rng);
  const double s = crps(xs, 0.0);
  // Closed form for N(0,1) at y=0: 2 pdf(0) - 1/sqrt(pi).
  const boost::math::normal_distribution<double> nd;
  const double exact = 2 * boost::math::pdf(nd, 0.0) - 1 / std::sqrt(std::numbers::pi);
  return {std::abs(s - 0.23370) <= 0.005,
          fmt("sample CRPS %.5f, closed form %.5f, target 0.23370 +- 0.005", s, exact)};
}

Outcome determinism() {
  testing::TempDir dir("acceptance");
  std::ostringstream out, err;
  const std::string data = dir.file("sim.csv");
  if (run_cli({"gpbart", "simulate", "--generator", "benchmark", "--n", "100", "--seed", "1", "--out", data}, out, err) !=
      kExitOk)
    return {false, "simulate failed: " + err.str()};
  bool ok = true;
  std::string detail;
  for (const char* variant : {"B", "D"}) {
    std::vector<std::string> files;
    for (int run = 0; run < 2; ++run) {
      const std::string o = dir.file(std::string("fit") + variant + std::to_string(run));
      const int code = run_cli({"gpbart", "fit", "--data", data, "--ignore", "truth", "--variant", variant,
                                "--mcmc", "300", "--burnin", "100", "--seed", "9", "--out", o},
                               out, err);
      ok = ok && code == kExitOk;
      files.push_back(testing::read_file(o + "/posterior.jsonl"));
    }
    const bool same_file = !files[0].empty() && files[0] == files[1];

    FitSettings settings;
    settings.n_mcmc = 300;
    settings.n_burnin = 100;
    const Dataset train = load_csv(data, "y", {}, {"truth"});
    const FittedModel mem = fit_model(train, settings, parse_variant(variant), 9);
    std::stringstream saved;
    save_draws(mem, saved);
    const bool same_as_memory = saved.str() == files[0];
    const FittedModel back = load_draws(saved);
    const PredictionSet p1 = predict(mem, train.x, 10, 5);
    const PredictionSet p2 = predict(back, train.x, 10, 5);
    const bool same_pred = p1.mean == p2.mean && p1.replicates == p2.replicates &&
                           p1.draw_means == p2.draw_means;
    ok = ok && same_file && same_as_memory && same_pred;
    detail += fmt("%s: rerun file identical %s, CLI file equals in-memory save %s, "
                  "loaded predictions exactly equal %s; ",
                  variant, same_file ? "yes" : "no", same_as_memory ? "yes" : "no", same_pred ? "yes" : "no");
  }
  return {ok, detail};
}

Outcome property_suite() {
  Stopwatch clock;
  doctest::Context ctx;
  ctx.setOption("test-suite", "properties");
  ctx.setOption("no-version", true);
  const int res = ctx.run();
  return {res == 0, fmt("property suite (>= 1000 cases per property) %s, %.1f s",
                        res == 0 ? "green" : "has failures", clock.seconds())};
}

Outcome run_criterion(int c) {
  switch (c) {
    case 1: return marginal_likelihood_oracle();
    case 2: return conditioning_oracle();
    case 3: return induced_prior();
    case 4: return ablation_table();
    case 5: return move_acceptance();
    case 6: return ard();
    case 7: return friedman_robustness();
    case 8: return crps_estimator();
    case 9: return determinism();
    case 10: return property_suite();
  }
  return {false, "unknown criterion"};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::vector<int> which;
  if (argc > 1) {
    which.push_back(std::atoi(argv[1]));
  } else {
    for (int c = 1; c <= 10; ++c) which.push_back(c);
  }
  bool all = true;
  for (int c : which) {
    Outcome o;
    try {
      o = run_criterion(c);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << ": " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
