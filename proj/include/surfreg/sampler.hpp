#ifndef SURFREG_SAMPLER_HPP
#define SURFREG_SAMPLER_HPP

#include <cstdint>
#include <functional>

#include "surfreg/posterior.hpp"
#include "surfreg/rng.hpp"

namespace surfreg {

enum class updater_kind { bmh, smh, srwm };

/*! Tuning knobs of the Metropolis-within-Gibbs sampler. */
struct mh_config {
  int newton_steps = 2;          // R forward/backward Newton iterations
  double proposal_df = 5.0;      // t proposal degrees of freedom, > 2
  double step_damping = 1.0;     // initial Newton step factor, halved on ascent failure
  index_t knot_block_size = 0;   // knots per joint block; 0 means all (one block)
  updater_kind updater = updater_kind::bmh;
  double srwm_scale = 0.25;      // random-walk per-coordinate proposal sd
  int srwm_adapt_sweeps = 300;   // pre-run adaptive phase targeting 0.25 acceptance
  // block switches; disabling freezes that part of the state (test hooks)
  bool update_sigma = true;
  bool update_knots = true;
  bool update_lambda = true;
};

/*! Stored draws and bookkeeping of one chain.
 *
 *  Rows of the draw matrices correspond to post-burn-in iterations.
 *  knot rows follow knot_set::flatten order; sigma rows store the
 *  lower triangle column-major; B rows store vec B.
 */
struct chain_output {
  mat knot_draws;        // iters × (l_s + l_a)
  mat loglambda_draws;   // iters × 3p
  mat sigma_draws;       // iters × p(p+1)/2
  mat B_draws;           // iters × pq
  mat accept;            // iters × 3: (sigma, knots, lambda) block acceptance in [0,1]
  double seconds_sigma = 0.0, seconds_knots = 0.0, seconds_lambda = 0.0, seconds_total = 0.0;
  std::uint64_t seed = 0;
  mh_config config;
  knot_set knot_shape;   // template carrying (d, per-covariate counts, q_s)
  index_t p = 0, q_o = 0, burn_in = 0;

  index_t n_draws() const { return B_draws.rows(); }
  double acceptance_rate(int block) const {
    return accept.rows() == 0 ? 0.0 : accept.col(block).mean();
  }
};

struct sigma_result {
  mat Sigma;
  bool accepted = false;
};

struct knot_result {
  knot_set knots;
  double accept_fraction = 0.0;    // fraction of knot blocks accepted this sweep
};

struct lambda_result {
  mat log_lambda;
  bool accepted = false;
};

struct mh_result {
  vec theta;
  bool accepted = false;
};

/*! Σ-step: exact inverse-Wishart draw for p = 1 (always accepted);
 *  for p > 1 the same inverse Wishart serves as an MH proposal against
 *  the marginal posterior of Σ given (ξ, λ) with B integrated out.
 */
sigma_result sigma_step(const model_state& state, const dataset& data, const prior_spec& prior,
                        rng& gen);

/*! One tailored MH update: R damped Newton steps to θ̂, a multivariate-t
 *  proposal with covariance −H(θ̂)^{-1}, R reverse Newton steps from the
 *  proposal for the backward density, and the usual acceptance ratio.
 *  Numerical failures anywhere auto-reject and never abort the chain.
 */
mh_result tailored_mh_step(const vec& theta_current,
                           const std::function<double(const vec&)>& logpost_fn,
                           const std::function<vec(const vec&)>& grad_fn,
                           const std::function<mat(const vec&)>& hess_fn, const mh_config& cfg,
                           rng& gen);

/*! Knot update: joint tailored MH over knot blocks (BMH: one block,
 *  SMH: one knot per block) or per-knot Gaussian random walk (SRWM).
 */
knot_result knot_step(const model_state& state, const dataset& data, const prior_spec& prior,
                      const mh_config& cfg, rng& gen);

// Joint tailored MH on the full 3p vector of log shrinkages.
lambda_result lambda_step(const model_state& state, const dataset& data,
                          const prior_spec& prior, const mh_config& cfg, rng& gen);

// vec B ~ N(β̃, Σ_β̃), reshaped to q×p.
mat draw_B(const model_state& state, const dataset& data, const prior_spec& prior, rng& gen);

/*! Three-block Gibbs driver: Σ-step, knot-step, λ-step, then a B draw
 *  per iteration.  Initialization: knots at the prior k-means centers,
 *  log λ at the prior mean, Σ = S0.  Fully reproducible from the seed.
 */
chain_output run_chain(const dataset& data, const prior_spec& prior, const knot_counts& counts,
                       const mh_config& cfg, index_t iterations, index_t burn_in,
                       std::uint64_t seed);

// Initial state used by run_chain (exposed for tests and warm starts).
model_state initial_state(const dataset& data, const prior_spec& prior,
                          const knot_counts& counts);

// Log density of the multivariate t with location mu, scale S (= L Lᵀ), df nu.
double log_mvt_density(const vec& x, const vec& mu, const Eigen::LLT<mat>& scale_llt, double nu);

}  // namespace surfreg

#endif
