#include "surfreg/posterior.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "surfreg/kernels.hpp"

namespace surfreg {

namespace {

constexpr double k_ln2 = 0.6931471805599453;
constexpr double k_lnpi = 1.1447298858494002;
constexpr double k_ln2pi = 1.8378770664093453;

double logdet_from_llt(const Eigen::LLT<mat>& llt) {
  return 2.0 * mat(llt.matrixL()).diagonal().array().log().sum();
}

// Everything shared between the marginal value and its derivatives.
struct workspace {
  design_matrix dm;
  mat G;              // XᵀX
  mat Sigma_inv;
  double logdet_Sigma = 0.0;
  std::array<index_t, 3> q{};         // (q_o, q_a, q_s)
  std::array<index_t, 3> col_off{};   // X column offset per component
  std::array<mat, 3> P, P_inv, W, A;  // per component; empty when q_i = 0
  std::array<double, 3> logdet_P{};
  index_map c;          // b order -> β order
  mat Sigma_beta, Sigma_beta_inv;
  vec mu;               // β order
  Eigen::LLT<mat> V_llt;
  double logdet_Sigma_beta = 0.0;
  double logdet_Sigma_beta_tilde = 0.0;
};

bool component_gram(const prior_spec& prior, int i) {
  const gram_choice g = i == 0 ? prior.P_o : (i == 1 ? prior.P_a : prior.P_s);
  return g == gram_choice::gram;
}

const mat& component_mean(const prior_spec& prior, int i) {
  return i == 0 ? prior.M_o : (i == 1 ? prior.M_a : prior.M_s);
}

double log_eq_constant(index_t n, index_t p, const prior_spec& prior) {
  Eigen::LLT<mat> s0_llt(prior.n0 * prior.S0);
  if (s0_llt.info() != Eigen::Success)
    throw std::runtime_error("log_marginal: n0*S0 is not positive definite");
  return -0.5 * (prior.n0 + n) * p * k_ln2 - 0.5 * n * p * k_lnpi -
         log_multigamma(p, 0.5 * prior.n0) + 0.5 * prior.n0 * logdet_from_llt(s0_llt);
}

workspace make_workspace(const model_state& state, const dataset& data,
                         const prior_spec& prior) {
  const index_t p = data.p();
  workspace w;
  w.dm = build_design(data, state.knots);
  w.G = w.dm.X.transpose() * w.dm.X;
  w.q = {w.dm.q_o, w.dm.q_a, w.dm.q_s};
  w.col_off = {0, w.dm.q_o, w.dm.q_o + w.dm.q_a};

  Eigen::LLT<mat> sig_llt = safe_llt(state.Sigma, "Sigma");
  w.Sigma_inv = sig_llt.solve(mat::Identity(p, p));
  w.logdet_Sigma = logdet_from_llt(sig_llt);

  double eta_sum_weighted = 0.0;    // Σ_i q_i Σ_j η_ij
  for (int i = 0; i < 3; ++i) {
    const index_t qi = w.q[i];
    vec half = (0.5 * state.log_lambda.row(i).transpose()).array().exp();
    vec half_inv = half.cwiseInverse();
    w.A[i] = half.asDiagonal() * state.Sigma * half.asDiagonal();
    w.W[i] = half_inv.asDiagonal() * w.Sigma_inv * half_inv.asDiagonal();
    eta_sum_weighted += qi * state.log_lambda.row(i).sum();
    if (qi == 0) {
      w.logdet_P[i] = 0.0;
      continue;
    }
    if (component_gram(prior, i)) {
      w.P[i] = w.G.block(w.col_off[i], w.col_off[i], qi, qi);
    } else {
      w.P[i] = mat::Identity(qi, qi);
    }
    Eigen::LLT<mat> p_llt = safe_llt(w.P[i], "P_i");
    w.P_inv[i] = p_llt.solve(mat::Identity(qi, qi));
    w.logdet_P[i] = logdet_from_llt(p_llt);
  }

  block_matrix Ab, Cb, Wb, Pb;
  for (int i = 0; i < 3; ++i) {
    if (w.q[i] == 0) continue;
    Ab.blocks.push_back(w.A[i]);
    Cb.blocks.push_back(w.P_inv[i]);
    Wb.blocks.push_back(w.W[i]);
    Pb.blocks.push_back(w.P[i]);
  }
  mat Sigma_b = khatri_rao_block(Ab, Cb);
  mat Sigma_b_inv = khatri_rao_block(Wb, Pb);
  w.c = beta_reorder_map(p, w.q[0], w.q[1], w.q[2]);
  w.Sigma_beta = gather_sym(w.c, Sigma_b);
  w.Sigma_beta_inv = gather_sym(w.c, Sigma_b_inv);

  vec mu_b(p * w.dm.q());
  index_t off = 0;
  for (int i = 0; i < 3; ++i) {
    const mat& Mi = component_mean(prior, i);
    if (Mi.size() != w.q[i] * p)
      throw std::invalid_argument("prior mean M_i has wrong shape");
    if (w.q[i] == 0) continue;
    mu_b.segment(off, w.q[i] * p) = Eigen::Map<const vec>(Mi.data(), Mi.size());
    off += w.q[i] * p;
  }
  w.mu = gather(w.c, mu_b);

  mat V = kron(w.Sigma_inv, w.G) + w.Sigma_beta_inv;
  w.V_llt = safe_llt(V, "Sigma_beta_tilde precision");
  w.logdet_Sigma_beta_tilde = -logdet_from_llt(w.V_llt);
  w.logdet_Sigma_beta = w.dm.q() * w.logdet_Sigma + eta_sum_weighted -
                        p * (w.logdet_P[0] + w.logdet_P[1] + w.logdet_P[2]);
  return w;
}

}  // namespace

Eigen::LLT<mat> safe_llt(const mat& A, const char* what) {
  Eigen::LLT<mat> llt(A);
  if (llt.info() == Eigen::Success) return llt;
  double scale = A.diagonal().cwiseAbs().mean() + 1e-300;
  for (double jitter : {1e-10, 1e-6}) {
    llt.compute(A + jitter * scale * mat::Identity(A.rows(), A.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
  throw std::runtime_error(std::string("Cholesky failed after jitter escalation: ") + what);
}

double log_multigamma(index_t p, double a) {
  double out = 0.25 * p * (p - 1) * k_lnpi;
  for (index_t j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1.0 - j));
  return out;
}

double log_invwishart_density(const mat& X, const mat& psi, double nu) {
  const index_t p = X.rows();
  Eigen::LLT<mat> psi_llt(psi), x_llt(X);
  if (psi_llt.info() != Eigen::Success || x_llt.info() != Eigen::Success)
    throw std::runtime_error("log_invwishart_density: non-SPD input");
  double logdet_psi = logdet_from_llt(psi_llt);
  double logdet_x = logdet_from_llt(x_llt);
  double tr = x_llt.solve(psi).trace();
  return 0.5 * nu * logdet_psi - 0.5 * nu * p * k_ln2 - log_multigamma(p, 0.5 * nu) -
         0.5 * (nu + p + 1.0) * logdet_x - 0.5 * tr;
}

double log_knot_prior(const knot_set& knots, const prior_spec& prior) {
  double out = 0.0;
  const index_t q_s = knots.q_s();
  if (q_s != prior.surface_knot_mean.rows())
    throw std::invalid_argument("knot prior: surface knot count mismatch");
  if (q_s > 0) {
    const index_t d = knots.surface.cols();
    Eigen::LLT<mat> llt = safe_llt(prior.surface_knot_cov, "surface knot prior covariance");
    double logdet = logdet_from_llt(llt);
    for (index_t k = 0; k < q_s; ++k) {
      vec diff = (knots.surface.row(k) - prior.surface_knot_mean.row(k)).transpose();
      out += -0.5 * d * k_ln2pi - 0.5 * logdet - 0.5 * diff.dot(llt.solve(diff));
    }
  }
  for (std::size_t v = 0; v < knots.additive.size(); ++v) {
    if (knots.additive[v].size() == 0) continue;
    const vec& m = prior.additive_knot_mean[v];
    if (m.size() != knots.additive[v].size())
      throw std::invalid_argument("knot prior: additive knot count mismatch");
    double var = prior.additive_knot_var[v];
    for (index_t k = 0; k < m.size(); ++k) {
      double diff = knots.additive[v][k] - m[k];
      out += -0.5 * k_ln2pi - 0.5 * std::log(var) - 0.5 * diff * diff / var;
    }
  }
  return out;
}

vec knot_prior_grad(const knot_set& knots, const prior_spec& prior) {
  vec g = vec::Zero(knots.n_coords());
  index_t off = 0;
  const index_t q_s = knots.q_s(), d = knots.surface.cols();
  if (q_s > 0) {
    Eigen::LLT<mat> llt = safe_llt(prior.surface_knot_cov, "surface knot prior covariance");
    for (index_t k = 0; k < q_s; ++k) {
      vec diff = (knots.surface.row(k) - prior.surface_knot_mean.row(k)).transpose();
      g.segment(k * d, d) = -llt.solve(diff);
    }
    off = q_s * d;
  }
  for (std::size_t v = 0; v < knots.additive.size(); ++v)
    for (index_t k = 0; k < knots.additive[v].size(); ++k, ++off)
      g[off] = -(knots.additive[v][k] - prior.additive_knot_mean[v][k]) /
               prior.additive_knot_var[v];
  return g;
}

mat knot_prior_hessian(const knot_set& knots, const prior_spec& prior) {
  const index_t l = knots.n_coords();
  mat H = mat::Zero(l, l);
  const index_t q_s = knots.q_s(), d = knots.surface.cols();
  if (q_s > 0) {
    Eigen::LLT<mat> llt = safe_llt(prior.surface_knot_cov, "surface knot prior covariance");
    mat prec = llt.solve(mat::Identity(d, d));
    for (index_t k = 0; k < q_s; ++k) H.block(k * d, k * d, d, d) = -prec;
  }
  index_t off = q_s * d;
  for (std::size_t v = 0; v < knots.additive.size(); ++v)
    for (index_t k = 0; k < knots.additive[v].size(); ++k, ++off)
      H(off, off) = -1.0 / prior.additive_knot_var[v];
  return H;
}

double log_loglambda_prior(const mat& log_lambda, const prior_spec& prior) {
  double out = 0.0;
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < log_lambda.cols(); ++j) {
      double v = prior.loglambda_var(i, j);
      double diff = log_lambda(i, j) - prior.loglambda_mean(i, j);
      out += -0.5 * k_ln2pi - 0.5 * std::log(v) - 0.5 * diff * diff / v;
    }
  return out;
}

vec loglambda_prior_grad(const mat& log_lambda, const prior_spec& prior) {
  const index_t p = log_lambda.cols();
  vec g(3 * p);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j)
      g[i * p + j] =
          -(log_lambda(i, j) - prior.loglambda_mean(i, j)) / prior.loglambda_var(i, j);
  return g;
}

mat loglambda_prior_hessian(const prior_spec& prior, index_t p) {
  mat H = mat::Zero(3 * p, 3 * p);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) H(i * p + j, i * p + j) = -1.0 / prior.loglambda_var(i, j);
  return H;
}

posterior_eval evaluate_posterior(const model_state& state, const dataset& data,
                                  const prior_spec& prior, const posterior_eval_request& req) {
  const index_t n = data.n(), p = data.p();
  if (state.log_lambda.rows() != 3 || state.log_lambda.cols() != p)
    throw std::invalid_argument("model_state: log_lambda must be 3×p");
  if (!state.log_lambda.allFinite())
    throw std::invalid_argument("model_state: non-finite log_lambda");

  workspace w = make_workspace(state, data, prior);
  const index_t q = w.dm.q(), pq = p * q;

  posterior_eval out;
  posterior_moments& m = out.moments;
  vec rhs = Eigen::Map<vec>(mat(w.dm.X.transpose() * data.Y * w.Sigma_inv).data(), pq) +
            w.Sigma_beta_inv * w.mu;
  m.beta_tilde = w.V_llt.solve(rhs);
  m.Sigma_beta_tilde = w.V_llt.solve(mat::Identity(pq, pq));
  m.Sigma_beta = w.Sigma_beta;
  m.B_tilde = Eigen::Map<mat>(m.beta_tilde.data(), q, p);
  m.E_tilde = data.Y - w.dm.X * m.B_tilde;
  m.S_tilde = m.E_tilde.transpose() * m.E_tilde / n;

  vec resid = m.beta_tilde - w.mu;
  double quad_prior = resid.dot(w.Sigma_beta_inv * resid);
  double tr_term = (w.Sigma_inv * (prior.n0 * prior.S0 + n * m.S_tilde)).trace();
  m.log_marginal = log_knot_prior(state.knots, prior) +
                   log_loglambda_prior(state.log_lambda, prior) +
                   log_eq_constant(n, p, prior) - 0.5 * w.logdet_Sigma_beta +
                   0.5 * w.logdet_Sigma_beta_tilde -
                   0.5 * (n + prior.n0 + p + 1.0) * w.logdet_Sigma -
                   0.5 * (tr_term + quad_prior);

  const bool need_M = (req.knot_grad || req.knot_scores) &&
                      (component_gram(prior, 1) || component_gram(prior, 2));
  const bool need_lambda = req.lambda_grad || req.lambda_scores;

  // M = Σ_β̃ + (β̃−μ)(β̃−μ)ᵀ reordered to the component-block (b) order;
  // shared by the λ derivatives and the gram-P knot terms.
  mat M_b;
  index_map cinv;
  std::array<index_t, 3> boff{};    // b-order offset of each component block
  if (need_M || need_lambda) {
    mat M_beta = m.Sigma_beta_tilde + resid * resid.transpose();
    cinv = w.c.inverse();
    M_b = gather_sym(cinv, M_beta);
    boff = {0, p * w.q[0], p * (w.q[0] + w.q[1])};
  }

  if (req.knot_grad || req.knot_scores) {
    design_gradient dg = design_gradient_of(data, state.knots);
    const index_t d = data.d();
    const index_t l_s = w.q[2] * d, l_a = w.q[1];

    // Ω = Σ_{k,l} (Σ^{-1})_{kl} Σ_β̃^{(k,l)}; the logdet term of the
    // marginal contracts to −vec(XΩ)ᵀ ∂vec X, and the residual term to
    // +vec(ẼΣ^{-1}B̃ᵀ)ᵀ ∂vec X (∂β̃ terms cancel at the stationary β̃).
    mat Omega = mat::Zero(q, q);
    for (index_t k = 0; k < p; ++k)
      for (index_t l = 0; l < p; ++l)
        Omega += w.Sigma_inv(k, l) * m.Sigma_beta_tilde.block(k * q, l * q, q, q);
    mat Mc = m.E_tilde * w.Sigma_inv * m.B_tilde.transpose() - w.dm.X * Omega;

    // gram P_i depending on knots: + (p/2) tr(P_i^{-1} ∂P_i)
    // − ½ tr[(Σ_β̃ + rrᵀ) ∂Σ_β^{-1}] adds X_i(p·P_i^{-1} − U_i) columns
    for (int i = 1; i < 3; ++i) {
      if (w.q[i] == 0 || !component_gram(prior, i)) continue;
      mat U = mat::Zero(w.q[i], w.q[i]);
      for (index_t k = 0; k < p; ++k)
        for (index_t l = 0; l < p; ++l)
          U += w.W[i](k, l) *
               M_b.block(boff[i] + k * w.q[i], boff[i] + l * w.q[i], w.q[i], w.q[i]);
      Mc.middleCols(w.col_off[i], w.q[i]) +=
          w.dm.X.middleCols(w.col_off[i], w.q[i]) * (p * w.P_inv[i] - U);
    }

    mat scores = mat::Zero(n, l_s + l_a);
    for (index_t j = 0; j < w.q[2]; ++j) {
      const index_t col = w.col_off[2] + j;
      for (index_t k = 0; k < d; ++k)
        scores.col(j * d + k) = Mc.col(col).cwiseProduct(dg.surface[j].col(k));
    }
    for (index_t a = 0; a < w.q[1]; ++a) {
      const index_t col = w.col_off[1] + a;
      scores.col(l_s + a) = Mc.col(col).cwiseProduct(dg.additive[a]);
    }
    if (req.knot_scores) out.knot_scores = scores;
    if (req.knot_grad)
      out.knot_grad = scores.colwise().sum().transpose() + knot_prior_grad(state.knots, prior);
  }

  if (need_lambda) {
    out.lambda_grad = loglambda_prior_grad(state.log_lambda, prior);
    vec u_b = gather(cinv, resid);
    mat D;    // ∂β̃/∂(log λ)' for the per-observation scores
    if (req.lambda_scores) D = mat::Zero(pq, 3 * p);

    for (int i = 0; i < 3; ++i) {
      const index_t qi = w.q[i];
      if (qi == 0) continue;
      out.lambda_grad.segment(i * p, p).array() -= 0.5 * qi;

      // T_i(k,l) = <M_b block (k,l) of component i, P_i>
      mat T(p, p);
      for (index_t k = 0; k < p; ++k)
        for (index_t l = 0; l < p; ++l)
          T(k, l) = (M_b.block(boff[i] + k * qi, boff[i] + l * qi, qi, qi)
                         .cwiseProduct(w.P[i]))
                        .sum();
      mat TW = T * w.W[i];
      for (index_t j = 0; j < p; ++j) out.lambda_grad[i * p + j] += 0.5 * TW(j, j);

      if (req.lambda_scores) {
        // ∂β̃/∂η_ij = −Σ_β̃ (∂Σ_β^{-1}/∂η_ij)(β̃−μ), block pathway only
        mat U_i = Eigen::Map<mat>(u_b.data() + boff[i], qi, p);
        for (index_t j = 0; j < p; ++j) {
          mat dW = mat::Zero(p, p);
          dW.row(j) = -0.5 * w.W[i].row(j);
          dW.col(j) += -0.5 * w.W[i].col(j);
          mat Vblk = w.P[i] * U_i * dW;    // (dW ⊗ P_i) vec(U_i), reshaped
          vec v_b = vec::Zero(pq);
          v_b.segment(boff[i], qi * p) = Eigen::Map<vec>(Vblk.data(), qi * p);
          D.col(i * p + j) = -w.V_llt.solve(gather(w.c, v_b));
        }
      }
    }
    if (req.lambda_scores) {
      mat F = m.E_tilde * w.Sigma_inv;
      out.lambda_scores = mat::Zero(n, 3 * p);
      for (index_t k = 0; k < p; ++k)
        out.lambda_scores +=
            F.col(k).asDiagonal() * (w.dm.X * D.middleRows(k * q, q));
    }
    if (!req.lambda_grad) out.lambda_grad.resize(0);
  }

  if (req.sigma_proposal) {
    out.sigma_proposal_scale = prior.n0 * prior.S0 + n * m.S_tilde;
    index_t row_off = 0;
    for (int i = 0; i < 3; ++i) {
      const index_t qi = w.q[i];
      if (qi == 0) continue;
      mat diff = m.B_tilde.middleRows(row_off, qi) - component_mean(prior, i);
      vec half_inv = (-0.5 * state.log_lambda.row(i).transpose()).array().exp();
      out.sigma_proposal_scale += half_inv.asDiagonal() *
                                  (diff.transpose() * w.P[i] * diff) *
                                  half_inv.asDiagonal();
      row_off += qi;
    }
  }
  return out;
}

posterior_moments conditional_B(const model_state& state, const dataset& data,
                                const prior_spec& prior) {
  return evaluate_posterior(state, data, prior, {}).moments;
}

double log_marginal(const model_state& state, const dataset& data, const prior_spec& prior) {
  return evaluate_posterior(state, data, prior, {}).moments.log_marginal;
}

vec grad_knots(const model_state& state, const dataset& data, const prior_spec& prior) {
  posterior_eval_request req;
  req.knot_grad = true;
  return evaluate_posterior(state, data, prior, req).knot_grad;
}

vec grad_log_lambda(const model_state& state, const dataset& data, const prior_spec& prior) {
  posterior_eval_request req;
  req.lambda_grad = true;
  return evaluate_posterior(state, data, prior, req).lambda_grad;
}

mat opg_hessian(const mat& per_observation_scores, const mat& prior_hessian) {
  if (!per_observation_scores.allFinite())
    throw std::invalid_argument("opg_hessian: non-finite scores");
  mat H = prior_hessian;
  if (per_observation_scores.size() > 0)
    H -= per_observation_scores.transpose() * per_observation_scores;
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<mat> es(H);
  double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double cap = -1e-8 * scale;
  vec ev = es.eigenvalues().cwiseMin(cap);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace surfreg
