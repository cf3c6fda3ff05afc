#include "gpbart/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "gpbart/errors.hpp"

namespace gpbart {

char variant_letter(Variant v) { return "ABCD"[static_cast<int>(v)]; }

Variant parse_variant(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'A': case 'a': return Variant::kA;
      case 'B': case 'b': return Variant::kB;
      case 'C': case 'c': return Variant::kC;
      case 'D': case 'd': return Variant::kD;
    }
  }
  throw ValidationError("unknown variant '" + std::string(s) + "' (expected A, B, C or D)");
}

std::vector<double> default_phi_grid() {
  return {0.1, 0.5, 1, 1.5, 2, 3, 4, 5, 6, 7, 8, 9, 10, 50};
}

double ols_precision(const Eigen::VectorXd& y, const Design& design, std::ostream* warn) {
  const Eigen::Index n = y.size();
  // Regressors: continuous columns as-is, categorical columns one-hot with
  // the first level dropped.
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (design.is_continuous(static_cast<int>(j))) {
      cols.push_back(design.x.col(j));
    } else {
      for (int level = 1; level < design.levels[j]; ++level)
        cols.push_back((design.x.col(j).array() == level).cast<double>().matrix());
    }
  }
  const auto p = static_cast<Eigen::Index>(cols.size());
  const double mean = y.mean();
  const double var_y = n > 1 ? (y.array() - mean).square().sum() / (n - 1) : 1.0;
  if (n <= p + 1) {
    if (warn)
      *warn << "warning: n=" << n << " <= p+1=" << p + 1
            << "; using 1/var(y) as the OLS precision\n";
    return 1.0 / std::max(var_y, 1e-12);
  }
  Eigen::MatrixXd a(n, p + 1);
  a.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) a.col(j + 1) = cols[j];
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  const Eigen::VectorXd beta = cod.solve(y);
  const double rss = (y - a * beta).squaredNorm();
  const double dof = static_cast<double>(n - cod.rank());
  const double sigma2 = dof > 0 ? rss / dof : var_y;
  return 1.0 / std::max(sigma2, 1e-12);
}

double calibrate_tau_rate(double shape, double tau_hat, double eta) {
  if (!(shape > 0) || !(tau_hat > 0) || !(eta > 0 && eta < 1))
    throw ValidationError("calibrate_tau_rate: need shape > 0, tau_hat > 0, eta in (0,1)");
  // Upper tail Q(shape, rate * tau_hat) decreases in the rate.
  auto f = [&](double rate) { return boost::math::gamma_q(shape, rate * tau_hat) - eta; };
  double hi = 1.0 / tau_hat;
  while (f(hi) > 0) hi *= 2.0;
  double lo = hi / 2.0;
  while (f(lo) < 0) lo /= 2.0;
  std::uintmax_t max_iter = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      f, lo, hi, boost::math::tools::eps_tolerance<double>(50), max_iter);
  return 0.5 * (a + b);
}

Hyperparams calibrate(const Eigen::VectorXd& y, const Design& design, int trees, double k,
                      double eta_tau, std::ostream* warn) {
  if (trees < 1) throw ValidationError("number of trees must be >= 1");
  if (!(k > 0)) throw ValidationError("k must be positive");
  Hyperparams hp;
  hp.trees = trees;
  hp.k = k;
  hp.nu = hp.tau_mu = 4.0 * k * k * trees;
  hp.mu_mu = 0.0;
  hp.eta_tau = eta_tau;
  hp.d_tau = calibrate_tau_rate(hp.a_tau, ols_precision(y, design, warn), eta_tau);
  return hp;
}

Eigen::VectorXd partial_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& fits, int t) {
  Eigen::VectorXd r = y;
  for (Eigen::Index s = 0; s < fits.cols(); ++s)
    if (s != t) r -= fits.col(s);
  return r;
}

double gibbs_tau(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat, double a_tau,
                 double d_tau, Rng& rng) {
  const double shape = 0.5 * static_cast<double>(y.size()) + a_tau;
  const double rate = 0.5 * (y - y_hat).squaredNorm() + d_tau;
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double log_gamma_density(double x, double shape, double rate) {
  if (!(x > 0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_phi_prior(double phi, const Hyperparams& hp) {
  const double a = std::log(hp.kappa) + log_gamma_density(phi, hp.a_phi1, hp.d_phi1);
  const double b = std::log1p(-hp.kappa) + log_gamma_density(phi, hp.a_phi2, hp.d_phi2);
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

namespace {

double leaf_log_likelihood(const std::vector<int>& rows, const Eigen::VectorXd& residuals,
                           const Design& design, const Eigen::VectorXd& phi, double tau,
                           const Hyperparams& hp, bool gp_nodes) {
  const Eigen::VectorXd r = residuals(rows);
  if (!gp_nodes) return constant_node_log_likelihood(r, tau, hp.tau_mu);
  return node_log_likelihood(r, design.gp_inputs(rows), hp.kernel(phi), tau);
}

}  // namespace

double leaves_log_likelihood(const DecisionTree& tree, const std::vector<NodeId>& leaves,
                             const Eigen::VectorXd& residuals, const Design& design,
                             const Eigen::VectorXd& phi, double tau, const Hyperparams& hp,
                             bool gp_nodes) {
  double ll = 0.0;
  for (NodeId id : leaves)
    ll += leaf_log_likelihood(tree.node(id).rows, residuals, design, phi, tau, hp, gp_nodes);
  return ll;
}

double tree_log_likelihood(const DecisionTree& tree, const Eigen::VectorXd& residuals,
                           const Design& design, const Eigen::VectorXd& phi, double tau,
                           const Hyperparams& hp, bool gp_nodes) {
  return leaves_log_likelihood(tree, tree.leaves(), residuals, design, phi, tau, hp, gp_nodes);
}

MoveStats& MoveStats::operator+=(const MoveStats& o) {
  for (int i = 0; i < kMoveKinds; ++i) {
    proposed[i] += o.proposed[i];
    accepted[i] += o.accepted[i];
  }
  numeric_rejections += o.numeric_rejections;
  return *this;
}

TreeStepResult mh_tree_step(DecisionTree& tree, const Eigen::VectorXd& residuals,
                            const Design& design, const Eigen::VectorXd& phi, double tau,
                            const Hyperparams& hp, Variant variant, Rng& rng) {
  TreeStepResult res;
  MoveProposal prop = propose_move(tree, design, hp.move_config(variant), rng);
  res.kind = prop.kind;
  res.valid = prop.valid;
  if (!prop.valid) return res;

  const bool gp = uses_gp(variant);
  double log_ratio;
  try {
    log_ratio =
        leaves_log_likelihood(prop.proposed, prop.added_leaves, residuals, design, phi, tau, hp, gp) -
        leaves_log_likelihood(tree, prop.removed_leaves, residuals, design, phi, tau, hp, gp) +
        log_tree_prior(prop.proposed, hp.alpha, hp.beta) - log_tree_prior(tree, hp.alpha, hp.beta);
  } catch (const NumericError& e) {
    res.numeric_failure = e.what();
    return res;
  }
  if (std::isnan(log_ratio)) {
    res.numeric_failure = "non-finite tree acceptance ratio";
    return res;
  }
  res.accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  // Always consume one uniform so the stream does not depend on the ratio.
  const double u = uniform01(rng);
  if (u < res.accept_prob) {
    tree = std::move(prop.proposed);
    res.accepted = true;
  }
  return res;
}

namespace {

// Per-leaf inputs, residuals and scaled squared distances at the current phi.
struct LeafDistances {
  Eigen::MatrixXd x;
  Eigen::VectorXd r;
  Eigen::MatrixXd d;
  Eigen::MatrixXd proposed_d;
};

}  // namespace

PhiStepResult mh_phi_step(const DecisionTree& tree, const Eigen::VectorXd& residuals,
                          const Design& design, Eigen::VectorXd& phi, double tau,
                          const Hyperparams& hp, Rng& rng,
                          std::optional<double> current_log_likelihood) {
  PhiStepResult res;
  detail::check_length_scales(phi);
  std::vector<LeafDistances> leaves;
  for (NodeId id : tree.leaves()) {
    LeafDistances leaf;
    leaf.x = design.gp_inputs(tree.node(id).rows);
    leaf.r = residuals(tree.node(id).rows);
    leaf.d = detail::scaled_sq_dist_matrix(leaf.x, phi);
    leaves.push_back(std::move(leaf));
  }
  Eigen::MatrixXd work;
  const KernelState<double> kernel = hp.kernel(phi);
  double ll = 0.0;
  if (current_log_likelihood) {
    ll = *current_log_likelihood;
  } else {
    for (const auto& leaf : leaves) ll += log_marginal_from_distances(leaf.r, leaf.d, kernel, tau, work);
  }
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    const double proposal = hp.phi_grid[uniform_index(rng, hp.phi_grid.size())];
    const double u = uniform01(rng);
    ++res.proposed;
    if (proposal == phi(j)) {
      ++res.accepted;
      continue;
    }
    // Only dimension j's term of the distance sum changes.
    const double shift = 1.0 / (proposal * proposal) - 1.0 / (phi(j) * phi(j));
    double ll_new = 0.0;
    try {
      for (auto& leaf : leaves) {
        const Eigen::Index n = leaf.x.rows();
        leaf.proposed_d.resize(n, n);
        const auto col = leaf.x.col(j).array();
        for (Eigen::Index k = 0; k < n; ++k)
          leaf.proposed_d.col(k) = leaf.d.col(k).array() + shift * (col - leaf.x(k, j)).square();
        ll_new += log_marginal_from_distances(leaf.r, leaf.proposed_d, kernel, tau, work);
      }
    } catch (const NumericError&) {
      continue;
    }
    const double log_ratio =
        ll_new - ll + log_phi_prior(proposal, hp) - log_phi_prior(phi(j), hp);
    if (std::log(u) < log_ratio) {
      phi(j) = proposal;
      ll = ll_new;
      for (auto& leaf : leaves) leaf.d.swap(leaf.proposed_d);
      ++res.accepted;
    }
  }
  res.log_likelihood = ll;
  return res;
}

Eigen::MatrixXd recompute_fits(const SamplerState& state, const Design& design) {
  const Eigen::Index n = design.rows();
  Eigen::MatrixXd fits = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(state.trees.size()));
  for (std::size_t t = 0; t < state.trees.size(); ++t) {
    DecisionTree routed = state.trees[t].structure_only();
    routed.assign_rows(design.x);
    for (NodeId id : routed.leaves()) {
      const auto& rows = routed.node(id).rows;
      const auto& values = state.leaf_values[t][id];
      if (static_cast<std::size_t>(values.size()) != rows.size())
        throw std::logic_error("leaf value count does not match routed rows");
      for (std::size_t i = 0; i < rows.size(); ++i)
        fits(rows[i], static_cast<Eigen::Index>(t)) = values(static_cast<Eigen::Index>(i));
    }
  }
  return fits;
}

namespace {

// Gibbs update of every leaf of tree t; writes the fit column and returns the
// tree log-likelihood at the current phi (GP nodes only).
double update_leaves(SamplerState& state, int t, const Eigen::VectorXd& residuals,
                     const Design& design, const Hyperparams& hp, bool gp, Rng& rng) {
  const DecisionTree& tree = state.trees[t];
  auto& values = state.leaf_values[t];
  values.assign(tree.size(), Eigen::VectorXd());
  double ll = 0.0;
  for (NodeId id : tree.leaves()) {
    const auto& rows = tree.node(id).rows;
    const Eigen::VectorXd r = residuals(rows);
    Eigen::VectorXd psi;
    if (gp) {
      const auto bundle = make_bundle(design.gp_inputs(rows), hp.kernel(state.phi[t]), state.tau);
      ll += log_marginal_node_likelihood(r, bundle);
      psi = sample_psi(r, bundle, rng);
    } else {
      const auto [mean, var] = constant_node_posterior(r, state.tau, hp.tau_mu);
      const double mu = mean + std::sqrt(var) * standard_normal(rng);
      psi = Eigen::VectorXd::Constant(r.size(), mu);
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      state.fits(rows[i], t) = psi(static_cast<Eigen::Index>(i));
    values[id] = std::move(psi);
  }
  return ll;
}

void validate_run_inputs(const Design& design, const Eigen::VectorXd& y, const Hyperparams& hp) {
  if (design.rows() != y.size()) throw ValidationError("design and response lengths differ");
  if (design.rows() < 2) throw ValidationError("need at least two training rows");
  if (hp.trees < 1) throw ValidationError("number of trees must be >= 1");
  if (hp.n_burnin < 0 || hp.n_burnin >= hp.n_mcmc)
    throw ValidationError("need 0 <= n_burnin < n_mcmc");
  if (!(hp.kappa > 0 && hp.kappa < 1)) throw ValidationError("kappa must lie in (0,1)");
  if (!(hp.alpha > 0 && hp.alpha < 1)) throw ValidationError("alpha must lie in (0,1)");
  if (hp.beta < 0) throw ValidationError("beta must be >= 0");
  if (hp.phi_grid.empty()) throw ValidationError("phi grid is empty");
  for (double v : hp.phi_grid)
    if (!(v > 0)) throw ValidationError("phi grid values must be positive");
  const auto& m = hp.moves;
  if (std::abs(m.grow + m.grow_project + m.change + m.change_project + m.prune - 1.0) > 1e-9)
    throw ValidationError("move probabilities must sum to 1");
}

void print_progress(std::ostream& os, const SamplerState& s, const MoveStats& stats) {
  double depth = 0.0;
  for (const auto& t : s.trees) depth += t.max_depth();
  depth /= static_cast<double>(s.trees.size());
  os << "iter " << s.iteration + 1 << " tau=" << std::setprecision(6) << s.tau
     << " mean_depth=" << std::setprecision(3) << depth;
  for (MoveKind k : kAllMoves) os << ' ' << move_name(k) << '=' << stats.rate(k);
  os << '\n';
}

}  // namespace

PosteriorDraws run(const Design& design, const Eigen::VectorXd& y, const Hyperparams& hp,
                   Variant variant, std::uint64_t seed, const RunOptions& options) {
  validate_run_inputs(design, y, hp);
  std::ostream& log = options.log ? *options.log : std::cerr;
  Rng rng(seed);
  const bool gp = uses_gp(variant);
  const int n = static_cast<int>(design.rows());
  const int n_trees = hp.trees;
  const auto p_gp = static_cast<Eigen::Index>(design.gp_columns.size());

  SamplerState state;
  state.trees.assign(n_trees, DecisionTree::stump(n));
  state.phi.assign(n_trees, Eigen::VectorXd::Ones(p_gp));
  state.leaf_values.assign(n_trees, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(n)});
  state.tau = 1.0;
  state.fits = Eigen::MatrixXd::Zero(n, n_trees);

  {
    const double ll = tree_log_likelihood(state.trees[0], y, design, state.phi[0], state.tau, hp, gp);
    if (!std::isfinite(ll))
      throw NumericError("non-finite likelihood at initialization (n=" + std::to_string(n) +
                         ", log-likelihood=" + std::to_string(ll) + ")");
  }

  PosteriorDraws out;
  out.hp = hp;
  out.variant = variant;
  out.seed = seed;
  out.design = design;
  out.draws.reserve(static_cast<std::size_t>(hp.n_mcmc - hp.n_burnin));
  out.tau_trace.reserve(static_cast<std::size_t>(hp.n_mcmc));

  for (int m = 0; m < hp.n_mcmc; ++m) {
    state.iteration = m;
    const bool retained = m >= hp.n_burnin;
    for (int t = 0; t < n_trees; ++t) {
      const Eigen::VectorXd residuals = partial_residuals(y, state.fits, t);

      const TreeStepResult step = mh_tree_step(state.trees[t], residuals, design, state.phi[t],
                                               state.tau, hp, variant, rng);
      if (step.numeric_failure) {
        ++out.all_stats.numeric_rejections;
        if (retained) ++out.retained_stats.numeric_rejections;
        if (options.verbose) log << "rejected proposal: " << *step.numeric_failure << '\n';
      }
      out.all_stats.record(step.kind, step.accepted);
      if (retained) out.retained_stats.record(step.kind, step.accepted);
      if (options.check_invariants && step.accepted && !leaves_partition_rows(state.trees[t], n))
        throw std::logic_error("leaf partition violated after accepted " +
                               std::string(move_name(step.kind)));

      const double ll = update_leaves(state, t, residuals, design, hp, gp, rng);
      if (gp && p_gp > 0) {
        const auto phi_res =
            mh_phi_step(state.trees[t], residuals, design, state.phi[t], state.tau, hp, rng, ll);
        out.phi_proposed += phi_res.proposed;
        out.phi_accepted += phi_res.accepted;
      }
    }
    state.tau = gibbs_tau(y, state.fits.rowwise().sum(), hp.a_tau, hp.d_tau, rng);
    out.tau_trace.push_back(state.tau);

    if (options.check_invariants) {
      const Eigen::MatrixXd again = recompute_fits(state, design);
      if (again != state.fits) throw std::logic_error("stored fits differ from recomputation");
    }
    if (options.on_iteration) options.on_iteration(state);
    if (options.verbose && (m + 1) % 100 == 0) print_progress(log, state, out.all_stats);

    if (retained) {
      Draw d;
      d.tau = state.tau;
      d.fit = state.fits.rowwise().sum();
      d.trees.reserve(static_cast<std::size_t>(n_trees));
      for (int t = 0; t < n_trees; ++t)
        d.trees.push_back({state.trees[t].structure_only(), state.phi[t], state.leaf_values[t]});
      out.draws.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace gpbart
