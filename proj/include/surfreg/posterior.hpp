#ifndef SURFREG_POSTERIOR_HPP
#define SURFREG_POSTERIOR_HPP

#include "surfreg/basis.hpp"
#include "surfreg/dataprep.hpp"
#include "surfreg/types.hpp"

namespace surfreg {

/*! Current (ξ, log λ, Σ) of the chain; B is drawn conditionally. */
struct model_state {
  knot_set knots;
  mat log_lambda;    // 3×p, component rows (o, a, s)
  mat Sigma;         // p×p SPD
};

/*! Conditional posterior moments of vec B given (ξ, λ, Σ) and the
 *  marginal posterior value at the state.
 *
 *  β stacking is vec B (response-major), b stacking is per-component;
 *  Sigma_beta is the prior covariance in β order, Sigma_beta_tilde the
 *  posterior covariance [Σ^{-1} ⊗ XᵀX + Σ_β^{-1}]^{-1}.
 */
struct posterior_moments {
  vec beta_tilde;          // pq
  mat Sigma_beta_tilde;    // pq×pq
  mat Sigma_beta;          // pq×pq
  mat S_tilde;             // p×p, ẼᵀẼ/n
  double log_marginal = 0.0;
  mat B_tilde;             // q×p reshape of beta_tilde
  mat E_tilde;             // n×p residuals Y − X B̃
};

struct posterior_eval_request {
  bool knot_grad = false;
  bool knot_scores = false;      // per-observation quasi-scores, n×(l_s+l_a)
  bool lambda_grad = false;
  bool lambda_scores = false;    // n×3p
  bool sigma_proposal = false;   // inverse-Wishart proposal scale of the Σ step
};

struct posterior_eval {
  posterior_moments moments;
  vec knot_grad;
  mat knot_scores;
  vec lambda_grad;
  mat lambda_scores;
  mat sigma_proposal_scale;    // n0·S0 + n·S̃ + Σ_i Λ_i^{-1/2}(B̃_i−M_i)ᵀP_i(B̃_i−M_i)Λ_i^{-1/2}
};

/*! Batched evaluation of the marginal posterior and its derivatives at
 *  one state; the individual operations below are thin wrappers.  All
 *  requested pieces share one design-matrix build and one Cholesky.
 */
posterior_eval evaluate_posterior(const model_state& state, const dataset& data,
                                  const prior_spec& prior, const posterior_eval_request& req);

posterior_moments conditional_B(const model_state& state, const dataset& data,
                                const prior_spec& prior);

/*! Log marginal posterior of (ξ, λ, Σ) with B integrated out, including
 *  the full normalizing constant of the B-integral and the knot, log-λ
 *  and Σ prior densities.
 *
 *  The B-integral contributes +½ log|Σ_β̃| (the Gaussian integral of the
 *  completed square), together with the constant
 *  2^{-(n0+n)p/2} π^{-np/2} Γ_p^{-1}(n0/2) |n0·S0|^{n0/2}; both are
 *  pinned against a Monte-Carlo integration oracle in the tests.
 */
double log_marginal(const model_state& state, const dataset& data, const prior_spec& prior);

// d log_marginal / d(flattened knot coordinates), length l_s + l_a
vec grad_knots(const model_state& state, const dataset& data, const prior_spec& prior);

// d log_marginal / d(log λ), length 3p in (o,a,s)-major, response-minor order
vec grad_log_lambda(const model_state& state, const dataset& data, const prior_spec& prior);

/*! Outer-product-of-gradients Hessian: −GᵀG + prior_hessian, eigenvalue
 *  clipped to stay negative definite. */
mat opg_hessian(const mat& per_observation_scores, const mat& prior_hessian);

// Log prior densities and their derivatives (normalized).
double log_knot_prior(const knot_set& knots, const prior_spec& prior);
vec knot_prior_grad(const knot_set& knots, const prior_spec& prior);
mat knot_prior_hessian(const knot_set& knots, const prior_spec& prior);
double log_loglambda_prior(const mat& log_lambda, const prior_spec& prior);
vec loglambda_prior_grad(const mat& log_lambda, const prior_spec& prior);
mat loglambda_prior_hessian(const prior_spec& prior, index_t p);

// Inverse-Wishart log density at X for scale psi and df nu.
double log_invwishart_density(const mat& X, const mat& psi, double nu);

// log Γ_p(a), the multivariate gamma function.
double log_multigamma(index_t p, double a);

// Cholesky with jitter escalation (1e-10 then 1e-6 of the mean diagonal);
// throws std::runtime_error when all attempts fail.
Eigen::LLT<mat> safe_llt(const mat& A, const char* what);

}  // namespace surfreg

#endif
