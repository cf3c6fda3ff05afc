#pragma once

// Terminal-node Gaussian processes: anisotropic exponentiated-quadratic
// kernel, the node likelihood with the constant node mean integrated out,
// the psi full conditional, and out-of-sample conditioning.
//
// Everything here is templated on the scalar type and takes Eigen
// expressions, so callers can pass blocks or gathered rows directly.

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "gpbart/errors.hpp"
#include "gpbart/rng.hpp"

namespace gpbart {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kMaxNugget = 1e-4;

template <typename Scalar>
struct KernelState {
  VectorX<Scalar> length_scales;  // one per kernel input
  Scalar nu = Scalar(1);          // GP precision
  Scalar tau_mu = Scalar(1);      // node-mean precision
  Scalar nugget = Scalar(1e-8);   // relative to 1/nu
};

namespace detail {

template <typename DerivedPhi>
void check_length_scales(const Eigen::MatrixBase<DerivedPhi>& phi) {
  for (Eigen::Index j = 0; j < phi.size(); ++j)
    if (!(phi(j) > 0) || !std::isfinite(static_cast<double>(phi(j))))
      throw ValidationError("length scale " + std::to_string(j) + " must be positive and finite");
}

template <typename DA, typename DB, typename DPhi>
typename DA::Scalar scaled_sq_dist(const Eigen::MatrixBase<DA>& xa, Eigen::Index i,
                                   const Eigen::MatrixBase<DB>& xb, Eigen::Index k,
                                   const Eigen::MatrixBase<DPhi>& phi) {
  typename DA::Scalar s(0);
  for (Eigen::Index j = 0; j < xa.cols(); ++j) {
    const auto d = (xa(i, j) - xb(k, j)) / phi(j);
    s += d * d;
  }
  return s;
}

}  // namespace detail

namespace detail {

// D(i,k) = sum_j (x_ij - x_kj)^2 / phi_j^2, exactly symmetric.
template <typename Derived, typename DerivedPhi>
MatrixX<typename Derived::Scalar> scaled_sq_dist_matrix(const Eigen::MatrixBase<Derived>& x,
                                                        const Eigen::MatrixBase<DerivedPhi>& phi) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  MatrixX<Scalar> d = MatrixX<Scalar>::Zero(n, n);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j).array();
    for (Eigen::Index k = 0; k < n; ++k)
      d.col(k).array() += ((col - x(k, j)) / phi(j)).square();
  }
  return d;
}

}  // namespace detail

// Omega(i,k) = nu^-1 exp(-1/2 sum_j (x_ij - x_kj)^2 / phi_j^2) off the
// diagonal, nu^-1 (1 + nugget) on it.
template <typename Derived, typename DerivedPhi>
MatrixX<typename Derived::Scalar> build_omega(const Eigen::MatrixBase<Derived>& x,
                                              const Eigen::MatrixBase<DerivedPhi>& phi,
                                              typename Derived::Scalar nu,
                                              typename Derived::Scalar nugget) {
  using Scalar = typename Derived::Scalar;
  detail::check_length_scales(phi);
  const Scalar scale = Scalar(1) / nu;
  MatrixX<Scalar> omega = scale * (Scalar(-0.5) * detail::scaled_sq_dist_matrix(x, phi).array()).exp();
  omega.diagonal().setConstant(scale * (Scalar(1) + nugget));
  return omega;
}

// Cross-covariance between two point sets (rows of xa by rows of xb). The
// nugget is carried by coincident points, so conditioning a node on its own
// inputs reproduces the node values.
template <typename DA, typename DB, typename DerivedPhi>
MatrixX<typename DA::Scalar> cross_omega(const Eigen::MatrixBase<DA>& xa,
                                         const Eigen::MatrixBase<DB>& xb,
                                         const Eigen::MatrixBase<DerivedPhi>& phi,
                                         typename DA::Scalar nu, typename DA::Scalar nugget) {
  using Scalar = typename DA::Scalar;
  detail::check_length_scales(phi);
  const Scalar scale = Scalar(1) / nu;
  MatrixX<Scalar> out(xa.rows(), xb.rows());
  for (Eigen::Index k = 0; k < xb.rows(); ++k)
    for (Eigen::Index i = 0; i < xa.rows(); ++i) {
      const Scalar d2 = detail::scaled_sq_dist(xa, i, xb, k, phi);
      out(i, k) = scale * (std::exp(Scalar(-0.5) * d2) + (d2 == Scalar(0) ? nugget : Scalar(0)));
    }
  return out;
}

// Per-node covariance terms for one value of (phi, tau):
//   Lambda = tau_mu^-1 11' + Omega,  Gamma = tau^-1 I + Omega,
// plus the Cholesky factor and log-determinant of tau^-1 I + Lambda.
template <typename Scalar>
struct CovarianceBundle {
  MatrixX<Scalar> omega;
  MatrixX<Scalar> lambda;
  Eigen::LLT<MatrixX<Scalar>> chol;
  Scalar log_det = Scalar(0);
  Scalar noise_var = Scalar(1);  // tau^-1
  Scalar nugget = Scalar(0);     // level actually used

  Eigen::Index size() const { return omega.rows(); }
  MatrixX<Scalar> gamma() const {
    MatrixX<Scalar> g = omega;
    g.diagonal().array() += noise_var;
    return g;
  }
  // (tau^-1 I + Lambda)^-1 b
  template <typename Derived>
  MatrixX<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    return chol.solve(b);
  }
};

// Builds the bundle, multiplying the nugget by 10 (up to kMaxNugget) until the
// Cholesky factorization succeeds.
template <typename Derived>
CovarianceBundle<typename Derived::Scalar> make_bundle(
    const Eigen::MatrixBase<Derived>& x, const KernelState<typename Derived::Scalar>& kernel,
    typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  CovarianceBundle<Scalar> b;
  b.noise_var = Scalar(1) / tau;
  const Eigen::Index n = x.rows();
  for (Scalar nugget = kernel.nugget;; nugget *= Scalar(10)) {
    b.nugget = nugget;
    b.omega = build_omega(x, kernel.length_scales, kernel.nu, nugget);
    b.lambda = b.omega.array() + Scalar(1) / kernel.tau_mu;
    MatrixX<Scalar> a = b.lambda;
    a.diagonal().array() += b.noise_var;
    b.chol.compute(a);
    if (b.chol.info() == Eigen::Success && b.chol.matrixLLT().diagonal().allFinite()) break;
    if (!a.allFinite() || nugget * Scalar(10) > Scalar(kMaxNugget) * Scalar(1.0000001)) {
      std::ostringstream msg;
      msg << "Cholesky failed for a node of size " << n << " (tau=" << tau
          << ", nugget=" << nugget << ", diag range " << a.diagonal().minCoeff() << ".."
          << a.diagonal().maxCoeff() << ")";
      throw NumericError(msg.str());
    }
  }
  const auto& l = b.chol.matrixLLT();
  b.log_det = Scalar(2) * l.diagonal().array().log().sum();
  return b;
}

// log MVN(r; 0, tau^-1 I + Lambda): the node likelihood with mu integrated out
// against its N(0, tau_mu^-1) prior.
template <typename Scalar, typename Derived>
Scalar log_marginal_node_likelihood(const Eigen::MatrixBase<Derived>& r,
                                    const CovarianceBundle<Scalar>& bundle) {
  const VectorX<Scalar> w = bundle.chol.matrixL().solve(r);
  const Scalar n = static_cast<Scalar>(r.size());
  return Scalar(-0.5) * (n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                         bundle.log_det + w.squaredNorm());
}

// Node log-likelihood from the scaled squared distances D of the node's
// inputs (see scaled_sq_dist_matrix); Omega = nu^-1 exp(-D/2). `work` is
// resized and overwritten with the Cholesky factor.
template <typename Scalar, typename DerivedR>
Scalar log_marginal_from_distances(const Eigen::MatrixBase<DerivedR>& r, const MatrixX<Scalar>& d,
                                   const KernelState<Scalar>& kernel, Scalar tau,
                                   MatrixX<Scalar>& work) {
  const Eigen::Index n = d.rows();
  const Scalar scale = Scalar(1) / kernel.nu;
  const Scalar mean_var = Scalar(1) / kernel.tau_mu;
  work.resize(n, n);
  for (Scalar nugget = kernel.nugget;; nugget *= Scalar(10)) {
    work = (scale * (Scalar(-0.5) * d.array()).exp()).array() + mean_var;
    work.diagonal().setConstant(scale * (Scalar(1) + nugget) + mean_var + Scalar(1) / tau);
    Eigen::LLT<Eigen::Ref<MatrixX<Scalar>>> chol(work);
    if (chol.info() == Eigen::Success && chol.matrixLLT().diagonal().allFinite()) {
      const VectorX<Scalar> w = chol.matrixL().solve(r);
      const Scalar log_det = Scalar(2) * chol.matrixLLT().diagonal().array().log().sum();
      return Scalar(-0.5) * (static_cast<Scalar>(n) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                             log_det + w.squaredNorm());
    }
    if (!work.allFinite() || nugget * Scalar(10) > Scalar(kMaxNugget) * Scalar(1.0000001))
      throw NumericError("Cholesky failed for a node of size " + std::to_string(n) +
                         " (tau=" + std::to_string(static_cast<double>(tau)) + ")");
  }
}

// Same value as log_marginal_node_likelihood(r, make_bundle(x, kernel, tau))
// without keeping Omega or Lambda.
template <typename DerivedR, typename DerivedX>
typename DerivedX::Scalar node_log_likelihood(const Eigen::MatrixBase<DerivedR>& r,
                                              const Eigen::MatrixBase<DerivedX>& x,
                                              const KernelState<typename DerivedX::Scalar>& kernel,
                                              typename DerivedX::Scalar tau) {
  using Scalar = typename DerivedX::Scalar;
  detail::check_length_scales(kernel.length_scales);
  const MatrixX<Scalar> d = detail::scaled_sq_dist_matrix(x, kernel.length_scales);
  MatrixX<Scalar> work;
  return log_marginal_from_distances(r, d, kernel, tau, work);
}

template <typename Scalar>
struct NodePosterior {
  VectorX<Scalar> mean;
  MatrixX<Scalar> cov;
};

// Full conditional of psi:
//   mean = Lambda (tau^-1 I + Lambda)^-1 r
//   cov  = Lambda - Lambda (tau^-1 I + Lambda)^-1 Lambda
template <typename Scalar, typename Derived>
NodePosterior<Scalar> node_posterior(const Eigen::MatrixBase<Derived>& r,
                                     const CovarianceBundle<Scalar>& bundle) {
  NodePosterior<Scalar> post;
  post.mean = bundle.lambda * bundle.solve(r);
  post.cov = bundle.lambda - bundle.lambda * bundle.solve(bundle.lambda);
  post.cov = Scalar(0.5) * (post.cov + post.cov.transpose()).eval();
  return post;
}

// Draw from MVN(0, cov) for a positive semidefinite cov. Uses a Cholesky
// factor when one exists, else a pivoted LDL' factorization with negative
// pivots from rounding clamped to zero.
template <typename Scalar>
VectorX<Scalar> sample_mvn_zero_mean(const MatrixX<Scalar>& cov, Rng& rng) {
  const Eigen::Index n = cov.rows();
  VectorX<Scalar> z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = static_cast<Scalar>(standard_normal(rng));
  Eigen::LLT<MatrixX<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite())
    return llt.matrixL() * z;
  Eigen::LDLT<MatrixX<Scalar>> ldlt(cov);
  const VectorX<Scalar> d = ldlt.vectorD().array().max(Scalar(0)).sqrt();
  VectorX<Scalar> w = ldlt.matrixL() * d.cwiseProduct(z).eval();
  return ldlt.transpositionsP().transpose() * w;
}

// One draw from the psi full conditional. Uses the pathwise form
//   psi = psi0 + Lambda A^-1 (r - psi0 - eps),  psi0 ~ N(0, Lambda),
//   eps ~ N(0, tau^-1 I),  A = tau^-1 I + Lambda,
// which has exactly the mean and covariance of node_posterior and reuses
// the cached factor of A.
template <typename Scalar, typename Derived>
VectorX<Scalar> sample_psi(const Eigen::MatrixBase<Derived>& r,
                           const CovarianceBundle<Scalar>& bundle, Rng& rng) {
  const Eigen::Index n = r.size();
  const VectorX<Scalar> psi0 = sample_mvn_zero_mean<Scalar>(bundle.lambda, rng);
  VectorX<Scalar> resid = r - psi0;
  const Scalar sd = std::sqrt(bundle.noise_var);
  for (Eigen::Index i = 0; i < n; ++i) resid(i) -= sd * static_cast<Scalar>(standard_normal(rng));
  return psi0 + bundle.lambda * bundle.solve(resid);
}

// psi ~ MVN(0, tau_mu^-1 11' + Omega): the node prior with mu integrated out.
template <typename Derived>
VectorX<typename Derived::Scalar> sample_prior_psi(
    const Eigen::MatrixBase<Derived>& x, const KernelState<typename Derived::Scalar>& kernel,
    Rng& rng) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> lambda = build_omega(x, kernel.length_scales, kernel.nu, kernel.nugget);
  lambda.array() += Scalar(1) / kernel.tau_mu;
  return sample_mvn_zero_mean<Scalar>(lambda, rng);
}

namespace detail {

template <typename Derived>
std::pair<Eigen::LLT<MatrixX<typename Derived::Scalar>>, typename Derived::Scalar> factor_lambda(
    const Eigen::MatrixBase<Derived>& x_node, const KernelState<typename Derived::Scalar>& kernel) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<MatrixX<Scalar>> chol;
  for (Scalar nugget = kernel.nugget;; nugget *= Scalar(10)) {
    MatrixX<Scalar> lambda = build_omega(x_node, kernel.length_scales, kernel.nu, nugget);
    lambda.array() += Scalar(1) / kernel.tau_mu;
    chol.compute(lambda);
    if (chol.info() == Eigen::Success && chol.matrixLLT().diagonal().allFinite())
      return {std::move(chol), nugget};
    if (!lambda.allFinite() || nugget * Scalar(10) > Scalar(kMaxNugget) * Scalar(1.0000001))
      throw NumericError("Cholesky of the node covariance failed for a node of size " +
                         std::to_string(x_node.rows()));
  }
}

}  // namespace detail

template <typename Scalar>
struct GpPrediction {
  VectorX<Scalar> mean;
  MatrixX<Scalar> cov;
};

// Conditions node values psi (at x_node) on new inputs x_star:
//   mean = Lambda*' Lambda^-1 psi,  cov = Lambda** - Lambda*' Lambda^-1 Lambda*.
template <typename DN, typename DS, typename DPsi>
GpPrediction<typename DN::Scalar> gp_predict(const Eigen::MatrixBase<DPsi>& psi,
                                             const Eigen::MatrixBase<DN>& x_node,
                                             const Eigen::MatrixBase<DS>& x_star,
                                             const KernelState<typename DN::Scalar>& kernel) {
  using Scalar = typename DN::Scalar;
  GpPrediction<Scalar> out;
  const Eigen::Index m = x_star.rows();
  if (m == 0) return out;
  if (x_node.rows() == 0) throw ValidationError("gp_predict needs at least one training row");
  const Scalar inv_tau_mu = Scalar(1) / kernel.tau_mu;
  const auto [chol, nugget] = detail::factor_lambda(x_node, kernel);
  MatrixX<Scalar> cross = cross_omega(x_node, x_star, kernel.length_scales, kernel.nu, nugget);
  cross.array() += inv_tau_mu;
  MatrixX<Scalar> star = build_omega(x_star, kernel.length_scales, kernel.nu, nugget);
  star.array() += inv_tau_mu;
  out.mean = cross.transpose() * chol.solve(psi);
  const MatrixX<Scalar> half = chol.matrixL().solve(cross);
  out.cov = star - half.transpose() * half;
  return out;
}

// Mean-only variant of gp_predict; skips the n* x n* covariance.
template <typename DN, typename DS, typename DPsi>
VectorX<typename DN::Scalar> gp_predict_mean(const Eigen::MatrixBase<DPsi>& psi,
                                             const Eigen::MatrixBase<DN>& x_node,
                                             const Eigen::MatrixBase<DS>& x_star,
                                             const KernelState<typename DN::Scalar>& kernel) {
  using Scalar = typename DN::Scalar;
  if (x_star.rows() == 0) return {};
  const Scalar inv_tau_mu = Scalar(1) / kernel.tau_mu;
  const auto [chol, nugget] = detail::factor_lambda(x_node, kernel);
  MatrixX<Scalar> cross = cross_omega(x_node, x_star, kernel.length_scales, kernel.nu, nugget);
  cross.array() += inv_tau_mu;
  return cross.transpose() * chol.solve(psi);
}

// Constant-mean nodes (Omega = 0): r ~ MVN(0, tau^-1 I + tau_mu^-1 11'), with
// determinant and quadratic form in closed form.
template <typename Derived>
typename Derived::Scalar constant_node_log_likelihood(const Eigen::MatrixBase<Derived>& r,
                                                      typename Derived::Scalar tau,
                                                      typename Derived::Scalar tau_mu) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = static_cast<Scalar>(r.size());
  const Scalar sum = r.sum();
  const Scalar ratio = n * tau / tau_mu;
  const Scalar log_det = -n * std::log(tau) + std::log1p(ratio);
  const Scalar quad = tau * r.squaredNorm() - tau * tau / tau_mu * sum * sum / (Scalar(1) + ratio);
  return Scalar(-0.5) * (n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det + quad);
}

// Conjugate update for a constant node mean: returns (mean, variance).
template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar> constant_node_posterior(
    const Eigen::MatrixBase<Derived>& r, typename Derived::Scalar tau,
    typename Derived::Scalar tau_mu) {
  using Scalar = typename Derived::Scalar;
  const Scalar precision = tau_mu + static_cast<Scalar>(r.size()) * tau;
  return {tau * r.sum() / precision, Scalar(1) / precision};
}

}  // namespace gpbart
