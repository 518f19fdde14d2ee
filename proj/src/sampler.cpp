#include "surfreg/sampler.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace surfreg {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/*! Shared evaluation cache so that logpost, gradient and Hessian calls
 *  at the same point cost one posterior evaluation.  Failures surface
 *  as -inf logpost / NaN derivatives and lead to auto-rejection.
 */
struct block_target {
  std::function<void(const vec&)> evaluate;    // fills the fields below
  vec theta_cached;
  bool valid = false;
  double logpost = k_neg_inf;
  vec grad;
  mat hess;

  void ensure(const vec& th) {
    if (valid && theta_cached.size() == th.size() && (theta_cached.array() == th.array()).all())
      return;
    theta_cached = th;
    valid = true;
    evaluate(th);
  }
};

mh_result tailored_mh_on(block_target& target, const vec& theta_current, const mh_config& cfg,
                         rng& gen) {
  auto logpost_fn = [&](const vec& th) {
    target.ensure(th);
    return target.logpost;
  };
  auto grad_fn = [&](const vec& th) {
    target.ensure(th);
    return target.grad;
  };
  auto hess_fn = [&](const vec& th) {
    target.ensure(th);
    return target.hess;
  };
  return tailored_mh_step(theta_current, logpost_fn, grad_fn, hess_fn, cfg, gen);
}

struct climb_result {
  vec theta;
  double logpost = k_neg_inf;
  mat hess;
  bool ok = false;
};

climb_result newton_climb(const vec& theta0, const std::function<double(const vec&)>& logpost_fn,
                          const std::function<vec(const vec&)>& grad_fn,
                          const std::function<mat(const vec&)>& hess_fn, const mh_config& cfg) {
  climb_result out;
  double lp = logpost_fn(theta0);
  if (!std::isfinite(lp)) return out;
  vec theta = theta0;
  for (int r = 0; r < cfg.newton_steps; ++r) {
    vec g = grad_fn(theta);
    mat H = hess_fn(theta);
    if (!g.allFinite() || !H.allFinite()) return out;
    Eigen::LLT<mat> llt(mat(-H));
    if (llt.info() != Eigen::Success) return out;
    vec step = llt.solve(g);
    double t = cfg.step_damping;
    for (int attempt = 0; attempt < 6; ++attempt) {
      vec cand = theta + t * step;
      double lp_cand = logpost_fn(cand);
      if (std::isfinite(lp_cand) && lp_cand >= lp) {
        theta = cand;
        lp = lp_cand;
        break;
      }
      t *= 0.5;    // ascent safeguard: halve on decrease, give up after 5 halvings
    }
  }
  out.hess = hess_fn(theta);
  if (!out.hess.allFinite()) return out;
  out.theta = theta;
  out.logpost = lp;
  out.ok = true;
  return out;
}

// t proposal pieces at a climbed mode: scale = (ν−2)/ν · (−H)^{-1}
struct t_proposal {
  vec center;
  Eigen::LLT<mat> scale_llt;
  bool ok = false;
};

t_proposal make_t_proposal(const climb_result& climb, double nu) {
  t_proposal prop;
  const index_t k = climb.theta.size();
  Eigen::LLT<mat> neg_h(mat(-climb.hess));
  if (neg_h.info() != Eigen::Success) return prop;
  mat cov = neg_h.solve(mat::Identity(k, k));
  prop.scale_llt.compute(((nu - 2.0) / nu) * cov);
  if (prop.scale_llt.info() != Eigen::Success) return prop;
  prop.center = climb.theta;
  prop.ok = true;
  return prop;
}

}  // namespace

double log_mvt_density(const vec& x, const vec& mu, const Eigen::LLT<mat>& scale_llt,
                       double nu) {
  const double k = static_cast<double>(x.size());
  vec diff = x - mu;
  double delta = diff.dot(scale_llt.solve(diff));
  double logdet = 2.0 * mat(scale_llt.matrixL()).diagonal().array().log().sum();
  return std::lgamma(0.5 * (nu + k)) - std::lgamma(0.5 * nu) -
         0.5 * k * std::log(nu * M_PI) - 0.5 * logdet -
         0.5 * (nu + k) * std::log1p(delta / nu);
}

mh_result tailored_mh_step(const vec& theta_current,
                           const std::function<double(const vec&)>& logpost_fn,
                           const std::function<vec(const vec&)>& grad_fn,
                           const std::function<mat(const vec&)>& hess_fn, const mh_config& cfg,
                           rng& gen) {
  mh_result out;
  out.theta = theta_current;

  climb_result forward = newton_climb(theta_current, logpost_fn, grad_fn, hess_fn, cfg);
  if (!forward.ok) return out;
  t_proposal fwd = make_t_proposal(forward, cfg.proposal_df);
  if (!fwd.ok) return out;

  vec theta_prop = gen.rmvt_chol(fwd.center, mat(fwd.scale_llt.matrixL()), cfg.proposal_df);
  double lp_prop = logpost_fn(theta_prop);
  double lp_curr = logpost_fn(theta_current);
  if (!std::isfinite(lp_prop)) return out;

  climb_result backward = newton_climb(theta_prop, logpost_fn, grad_fn, hess_fn, cfg);
  if (!backward.ok) return out;
  t_proposal bwd = make_t_proposal(backward, cfg.proposal_df);
  if (!bwd.ok) return out;

  double log_g_prop = log_mvt_density(theta_prop, fwd.center, fwd.scale_llt, cfg.proposal_df);
  double log_g_curr = log_mvt_density(theta_current, bwd.center, bwd.scale_llt, cfg.proposal_df);
  double log_alpha = (lp_prop + log_g_curr) - (lp_curr + log_g_prop);
  if (std::log(gen.runif()) < log_alpha) {
    out.theta = theta_prop;
    out.accepted = true;
  }
  return out;
}

namespace {

// Contiguous coordinate ranges of the flattened knot vector, one per knot.
std::vector<std::pair<index_t, index_t>> knot_coordinate_ranges(const knot_set& knots) {
  std::vector<std::pair<index_t, index_t>> ranges;
  const index_t d = knots.surface.cols();
  for (index_t j = 0; j < knots.q_s(); ++j) ranges.emplace_back(j * d, d);
  const index_t l_s = knots.q_s() * d;
  index_t a = 0;
  for (const auto& kv : knots.additive)
    for (index_t k = 0; k < kv.size(); ++k, ++a) ranges.emplace_back(l_s + a, 1);
  return ranges;
}

void make_knot_block_target(const model_state& state, const dataset& data,
                            const prior_spec& prior, const vec& full_flat, index_t off,
                            index_t len, const mat& prior_hess_full, block_target& storage) {
  storage.evaluate = [&state, &data, &prior, full_flat, off, len, &prior_hess_full,
                      &storage](const vec& th) {
    try {
      vec flat = full_flat;
      flat.segment(off, len) = th;
      model_state cand = state;
      cand.knots = state.knots.with_flat(flat);
      posterior_eval_request req;
      req.knot_grad = true;
      req.knot_scores = true;
      posterior_eval ev = evaluate_posterior(cand, data, prior, req);
      storage.logpost = ev.moments.log_marginal;
      storage.grad = ev.knot_grad.segment(off, len);
      storage.hess = opg_hessian(ev.knot_scores.middleCols(off, len),
                                 prior_hess_full.block(off, off, len, len));
    } catch (const std::exception&) {
      storage.logpost = k_neg_inf;
      storage.grad = vec::Constant(len, std::numeric_limits<double>::quiet_NaN());
      storage.hess = mat::Constant(len, len, std::numeric_limits<double>::quiet_NaN());
    }
  };
}

knot_result knot_step_srwm(const model_state& state, const dataset& data,
                           const prior_spec& prior, const mh_config& cfg, rng& gen) {
  knot_result out;
  out.knots = state.knots;
  vec flat = state.knots.flatten();
  auto ranges = knot_coordinate_ranges(state.knots);
  double lp = log_marginal(state, data, prior);
  index_t accepted = 0;
  for (const auto& [off, len] : ranges) {
    vec cand_flat = flat;
    for (index_t k = 0; k < len; ++k) cand_flat[off + k] += cfg.srwm_scale * gen.rnorm();
    model_state cand = state;
    cand.knots = state.knots.with_flat(cand_flat);
    double lp_cand;
    try {
      lp_cand = log_marginal(cand, data, prior);
    } catch (const std::exception&) {
      lp_cand = k_neg_inf;
    }
    if (std::isfinite(lp_cand) && std::log(gen.runif()) < lp_cand - lp) {
      flat = cand_flat;
      lp = lp_cand;
      ++accepted;
    }
  }
  out.knots = state.knots.with_flat(flat);
  out.accept_fraction =
      ranges.empty() ? 1.0 : static_cast<double>(accepted) / static_cast<double>(ranges.size());
  return out;
}

}  // namespace

knot_result knot_step(const model_state& state, const dataset& data, const prior_spec& prior,
                      const mh_config& cfg, rng& gen) {
  knot_result out;
  out.knots = state.knots;
  const index_t l = state.knots.n_coords();
  if (l == 0) {
    out.accept_fraction = 1.0;
    return out;
  }
  if (cfg.updater == updater_kind::srwm) return knot_step_srwm(state, data, prior, cfg, gen);

  auto ranges = knot_coordinate_ranges(state.knots);
  const index_t n_knots = static_cast<index_t>(ranges.size());
  index_t knots_per_block = cfg.updater == updater_kind::smh
                                ? 1
                                : (cfg.knot_block_size > 0 ? cfg.knot_block_size : n_knots);

  mat prior_hess = knot_prior_hessian(state.knots, prior);
  model_state rolling = state;
  vec flat = state.knots.flatten();
  index_t accepted = 0, n_blocks = 0;
  for (index_t first = 0; first < n_knots; first += knots_per_block, ++n_blocks) {
    index_t last = std::min(first + knots_per_block, n_knots);
    index_t off = ranges[first].first;
    index_t len = ranges[last - 1].first + ranges[last - 1].second - off;
    block_target target;
    make_knot_block_target(rolling, data, prior, flat, off, len, prior_hess, target);
    mh_result step = tailored_mh_on(target, flat.segment(off, len), cfg, gen);
    if (step.accepted) {
      flat.segment(off, len) = step.theta;
      rolling.knots = state.knots.with_flat(flat);
      ++accepted;
    }
  }
  out.knots = state.knots.with_flat(flat);
  out.accept_fraction =
      n_blocks == 0 ? 1.0 : static_cast<double>(accepted) / static_cast<double>(n_blocks);
  return out;
}

lambda_result lambda_step(const model_state& state, const dataset& data,
                          const prior_spec& prior, const mh_config& cfg, rng& gen) {
  const index_t p = data.p();
  mat prior_hess = loglambda_prior_hessian(prior, p);
  block_target target;
  target.evaluate = [&state, &data, &prior, &prior_hess, &target, p](const vec& th) {
    try {
      model_state cand = state;
      for (index_t i = 0; i < 3; ++i)
        for (index_t j = 0; j < p; ++j) cand.log_lambda(i, j) = th[i * p + j];
      posterior_eval_request req;
      req.lambda_grad = true;
      req.lambda_scores = true;
      posterior_eval ev = evaluate_posterior(cand, data, prior, req);
      target.logpost = ev.moments.log_marginal;
      target.grad = ev.lambda_grad;
      target.hess = opg_hessian(ev.lambda_scores, prior_hess);
    } catch (const std::exception&) {
      target.logpost = k_neg_inf;
      target.grad = vec::Constant(3 * p, std::numeric_limits<double>::quiet_NaN());
      target.hess = mat::Constant(3 * p, 3 * p, std::numeric_limits<double>::quiet_NaN());
    }
  };
  vec theta(3 * p);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) theta[i * p + j] = state.log_lambda(i, j);
  mh_result step = tailored_mh_on(target, theta, cfg, gen);
  lambda_result out;
  out.log_lambda = state.log_lambda;
  out.accepted = step.accepted;
  if (step.accepted)
    for (index_t i = 0; i < 3; ++i)
      for (index_t j = 0; j < p; ++j) out.log_lambda(i, j) = step.theta[i * p + j];
  return out;
}

sigma_result sigma_step(const model_state& state, const dataset& data, const prior_spec& prior,
                        rng& gen) {
  const index_t p = data.p();
  const double nu = prior.n0 + data.n();
  posterior_eval_request req;
  req.sigma_proposal = true;
  posterior_eval at_current = evaluate_posterior(state, data, prior, req);
  mat scale_c = at_current.sigma_proposal_scale;
  safe_llt(scale_c, "sigma proposal scale");    // error out early on a broken scale
  mat proposal = gen.rinvwishart(scale_c, nu);

  sigma_result out;
  if (p == 1) {
    // exact conditional: the inverse Wishart is the posterior itself
    out.Sigma = proposal;
    out.accepted = true;
    return out;
  }
  out.Sigma = state.Sigma;
  try {
    model_state cand = state;
    cand.Sigma = proposal;
    posterior_eval at_prop = evaluate_posterior(cand, data, prior, req);
    double log_alpha = at_prop.moments.log_marginal - at_current.moments.log_marginal +
                       log_invwishart_density(state.Sigma, at_prop.sigma_proposal_scale, nu) -
                       log_invwishart_density(proposal, scale_c, nu);
    if (std::log(gen.runif()) < log_alpha) {
      out.Sigma = proposal;
      out.accepted = true;
    }
  } catch (const std::exception&) {
    // numerically hostile proposal: reject, keep the current Sigma
  }
  return out;
}

mat draw_B(const model_state& state, const dataset& data, const prior_spec& prior, rng& gen) {
  posterior_moments m = conditional_B(state, data, prior);
  const index_t q = m.B_tilde.rows(), p = m.B_tilde.cols();
  Eigen::LLT<mat> llt = safe_llt(m.Sigma_beta_tilde, "Sigma_beta_tilde");
  vec b = gen.rmvnorm_chol(m.beta_tilde, mat(llt.matrixL()));
  return Eigen::Map<mat>(b.data(), q, p);
}

model_state initial_state(const dataset& data, const prior_spec& prior,
                          const knot_counts& counts) {
  (void)data;
  model_state state;
  state.knots.surface = prior.surface_knot_mean;
  state.knots.additive.clear();
  for (std::size_t v = 0; v < counts.additive.size(); ++v)
    state.knots.additive.push_back(counts.additive[v] > 0 ? prior.additive_knot_mean[v]
                                                          : vec());
  if (counts.surface != prior.surface_knot_mean.rows())
    throw std::invalid_argument("initial_state: prior surface knot count mismatch");
  state.log_lambda = prior.loglambda_mean;
  state.Sigma = prior.S0;
  return state;
}

chain_output run_chain(const dataset& data, const prior_spec& prior, const knot_counts& counts,
                       const mh_config& cfg, index_t iterations, index_t burn_in,
                       std::uint64_t seed) {
  const index_t p = data.p();
  rng gen(seed);
  model_state state = initial_state(data, prior, counts);

  chain_output out;
  out.seed = seed;
  out.config = cfg;
  out.knot_shape = state.knots;
  out.p = p;
  out.q_o = data.q_o();
  out.burn_in = burn_in;
  const index_t l = state.knots.n_coords();
  const index_t q = data.q_o() + state.knots.q_a() + state.knots.q_s();
  out.knot_draws.resize(iterations, l);
  out.loglambda_draws.resize(iterations, 3 * p);
  out.sigma_draws.resize(iterations, p * (p + 1) / 2);
  out.B_draws.resize(iterations, p * q);
  out.accept.resize(iterations, 3);

  mh_config live_cfg = cfg;
  double srwm_log_scale = std::log(cfg.srwm_scale);
  const index_t total = iterations + burn_in;
  auto t_start = std::chrono::steady_clock::now();

  for (index_t iter = 0; iter < total; ++iter) {
    try {
      double a_sigma = 1.0, a_knots = 1.0, a_lambda = 1.0;
      auto t0 = std::chrono::steady_clock::now();
      if (cfg.update_sigma) {
        sigma_result sr = sigma_step(state, data, prior, gen);
        state.Sigma = sr.Sigma;
        a_sigma = sr.accepted ? 1.0 : 0.0;
      }
      out.seconds_sigma += seconds_since(t0);

      t0 = std::chrono::steady_clock::now();
      if (cfg.update_knots && l > 0) {
        knot_result kr = knot_step(state, data, prior, live_cfg, gen);
        state.knots = kr.knots;
        a_knots = kr.accept_fraction;
        if (cfg.updater == updater_kind::srwm && cfg.srwm_adapt_sweeps > 0 &&
            iter < std::min<index_t>(burn_in, cfg.srwm_adapt_sweeps)) {
          srwm_log_scale += (a_knots - 0.25) / std::sqrt(static_cast<double>(iter + 1));
          live_cfg.srwm_scale = std::exp(srwm_log_scale);
        }
      }
      out.seconds_knots += seconds_since(t0);

      t0 = std::chrono::steady_clock::now();
      if (cfg.update_lambda) {
        lambda_result lr = lambda_step(state, data, prior, live_cfg, gen);
        state.log_lambda = lr.log_lambda;
        a_lambda = lr.accepted ? 1.0 : 0.0;
      }
      out.seconds_lambda += seconds_since(t0);

      mat B = draw_B(state, data, prior, gen);

      if (iter >= burn_in) {
        const index_t r = iter - burn_in;
        out.knot_draws.row(r) = state.knots.flatten().transpose();
        for (index_t i = 0; i < 3; ++i)
          for (index_t j = 0; j < p; ++j)
            out.loglambda_draws(r, i * p + j) = state.log_lambda(i, j);
        index_t k = 0;
        for (index_t cj = 0; cj < p; ++cj)
          for (index_t ci = cj; ci < p; ++ci) out.sigma_draws(r, k++) = state.Sigma(ci, cj);
        out.B_draws.row(r) = Eigen::Map<vec>(B.data(), B.size()).transpose();
        out.accept(r, 0) = a_sigma;
        out.accept(r, 1) = a_knots;
        out.accept(r, 2) = a_lambda;
      }
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "run_chain: unrecoverable failure at iteration " << iter << ": " << e.what()
          << " (seed " << seed << ", " << state.knots.q_s() << " surface knots, p=" << p << ")";
      throw std::runtime_error(msg.str());
    }
  }
  out.seconds_total = seconds_since(t_start);
  return out;
}

}  // namespace surfreg
