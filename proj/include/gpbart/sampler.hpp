#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpbart/design.hpp"
#include "gpbart/gp.hpp"
#include "gpbart/rng.hpp"
#include "gpbart/trees.hpp"

namespace gpbart {

// A: axis-aligned moves, constant nodes (standard BART)
// B: all five moves, constant nodes
// C: axis-aligned moves, GP nodes
// D: all five moves, GP nodes
enum class Variant { kA, kB, kC, kD };

inline bool uses_gp(Variant v) { return v == Variant::kC || v == Variant::kD; }
inline bool uses_projection(Variant v) { return v == Variant::kB || v == Variant::kD; }
char variant_letter(Variant v);
Variant parse_variant(std::string_view s);

std::vector<double> default_phi_grid();

struct Hyperparams {
  int trees = 10;
  double k = 2.0;
  double alpha = 0.95;
  double beta = 2.0;
  double nu = 160.0;      // 4 k^2 T
  double tau_mu = 160.0;  // 4 k^2 T
  double mu_mu = 0.0;
  double kappa = 0.3;
  double a_phi1 = 2.0, d_phi1 = 2.5;
  double a_phi2 = 5000.0, d_phi2 = 100.0;
  double a_tau = 3.0, d_tau = 1.0;
  double eta_tau = 0.9;
  MoveProbabilities moves;
  std::vector<double> theta_grid = default_theta_grid();
  std::vector<double> phi_grid = default_phi_grid();
  int n_mcmc = 2000;
  int n_burnin = 500;
  int q = 10;  // interval replicates per retained draw
  int min_leaf_size = 1;
  double nugget = 1e-8;

  // Move probabilities actually used by a variant: the axis-only variants
  // renormalize to (grow 0.3, change 0.4, prune 0.3).
  MoveProbabilities moves_for(Variant v) const {
    return uses_projection(v) ? moves : MoveProbabilities::axis_only();
  }
  TreeMoveConfig move_config(Variant v) const {
    return {moves_for(v), theta_grid, min_leaf_size};
  }
  KernelState<double> kernel(const Eigen::VectorXd& phi) const {
    return {phi, nu, tau_mu, nugget};
  }
};

// Residual precision from an OLS fit of y on the design (intercept,
// continuous columns, one-hot categorical columns). Falls back to 1/var(y)
// when n <= p + 1; uses a minimum-norm fit when the design is rank-deficient.
double ols_precision(const Eigen::VectorXd& y, const Design& design, std::ostream* warn = nullptr);

// Rate d such that Pr(tau >= tau_hat) = eta under Ga(shape, rate d).
double calibrate_tau_rate(double shape, double tau_hat, double eta);

// y must already be on the [-0.5, 0.5] model scale.
Hyperparams calibrate(const Eigen::VectorXd& y, const Design& design, int trees, double k,
                      double eta_tau, std::ostream* warn = nullptr);

Eigen::VectorXd partial_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& fits, int t);

// Draw from Ga(n/2 + a, (y - y_hat)'(y - y_hat)/2 + d).
double gibbs_tau(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, double a_tau,
                 double d_tau, Rng& rng);

double log_gamma_density(double x, double shape, double rate);
// log of kappa Ga(phi; a1, d1) + (1 - kappa) Ga(phi; a2, d2)
double log_phi_prior(double phi, const Hyperparams& hp);

// Sum of node log-likelihoods over the given leaves (ascending id order).
double leaves_log_likelihood(const DecisionTree& tree, const std::vector<NodeId>& leaves,
                             const Eigen::VectorXd& residuals, const Design& design,
                             const Eigen::VectorXd& phi, double tau, const Hyperparams& hp,
                             bool gp_nodes);

double tree_log_likelihood(const DecisionTree& tree, const Eigen::VectorXd& residuals,
                           const Design& design, const Eigen::VectorXd& phi, double tau,
                           const Hyperparams& hp, bool gp_nodes);

struct MoveStats {
  std::array<long, kMoveKinds> proposed{};
  std::array<long, kMoveKinds> accepted{};
  long numeric_rejections = 0;

  void record(MoveKind k, bool acc) {
    ++proposed[static_cast<int>(k)];
    if (acc) ++accepted[static_cast<int>(k)];
  }
  double rate(MoveKind k) const {
    const long p = proposed[static_cast<int>(k)];
    return p ? static_cast<double>(accepted[static_cast<int>(k)]) / p : 0.0;
  }
  MoveStats& operator+=(const MoveStats& o);
};

struct TreeStepResult {
  MoveKind kind = MoveKind::kGrow;
  bool valid = false;
  bool accepted = false;
  double accept_prob = 0.0;
  std::optional<std::string> numeric_failure;  // set when the ratio could not be evaluated
};

// One Metropolis-Hastings update of the tree structure against the partial
// residuals. The acceptance ratio contains only the marginal likelihood and
// the depth prior; invalid proposals are rejected outright.
TreeStepResult mh_tree_step(DecisionTree& tree, const Eigen::VectorXd& residuals,
                            const Design& design, const Eigen::VectorXd& phi, double tau,
                            const Hyperparams& hp, Variant variant, Rng& rng);

struct PhiStepResult {
  int proposed = 0;
  int accepted = 0;
  double log_likelihood = 0.0;  // tree log-likelihood at the final phi
};

// Coordinate-wise Metropolis update of the tree's length scales with a
// uniform proposal over hp.phi_grid. `current_log_likelihood` may be passed
// when already known for the current phi.
PhiStepResult mh_phi_step(const DecisionTree& tree, const Eigen::VectorXd& residuals,
                          const Design& design, Eigen::VectorXd& phi, double tau,
                          const Hyperparams& hp, Rng& rng,
                          std::optional<double> current_log_likelihood = std::nullopt);

struct TreeDraw {
  DecisionTree tree;  // structure only
  Eigen::VectorXd phi;
  // Indexed by node id; for a leaf, one value per training row reaching it
  // (ascending row order). Empty for internal nodes.
  std::vector<Eigen::VectorXd> leaf_values;
};

struct Draw {
  std::vector<TreeDraw> trees;
  double tau = 1.0;
  Eigen::VectorXd fit;  // in-sample fit, model scale
};

struct PosteriorDraws {
  Hyperparams hp;
  Variant variant = Variant::kD;
  std::uint64_t seed = 0;
  Design design;  // training covariates, normalized
  std::vector<Draw> draws;
  MoveStats retained_stats;  // post-burnin proposals only
  MoveStats all_stats;
  std::vector<double> tau_trace;  // every iteration
  long phi_proposed = 0;
  long phi_accepted = 0;
};

struct SamplerState {
  std::vector<DecisionTree> trees;
  std::vector<Eigen::VectorXd> phi;
  std::vector<std::vector<Eigen::VectorXd>> leaf_values;
  double tau = 1.0;
  Eigen::MatrixXd fits;  // n x T
  int iteration = 0;
};

// Recomputes the n x T fit matrix by routing every row through every tree.
Eigen::MatrixXd recompute_fits(const SamplerState& state, const Design& design);

struct RunOptions {
  bool verbose = false;
  std::ostream* log = nullptr;  // progress and warnings; std::cerr when null
  // Exhaustive partition and fit checks after every accepted move and
  // iteration; throws std::logic_error on violation.
  bool check_invariants = false;
  std::function<void(const SamplerState&)> on_iteration;
};

// Bayesian backfitting: per iteration and tree, partial residuals, tree MH,
// per-leaf psi Gibbs and phi MH; then a tau Gibbs step. Starts from T stumps
// with phi = 1, tau = 1 and psi = 0. y is on the model scale.
PosteriorDraws run(const Design& design, const Eigen::VectorXd& y, const Hyperparams& hp,
                   Variant variant, std::uint64_t seed, const RunOptions& options = {});

}  // namespace gpbart
