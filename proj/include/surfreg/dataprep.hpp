#ifndef SURFREG_DATAPREP_HPP
#define SURFREG_DATAPREP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "surfreg/types.hpp"

namespace surfreg {

/*! Regression data with standardized covariates.
 *
 *  X_o carries a leading intercept column; the remaining d = q_o - 1
 *  columns are covariates standardized to zero mean, unit variance.
 *  The standardization record (center, scale, population convention)
 *  is kept for prediction-time reuse on raw inputs.
 */
struct dataset {
  mat Y;     // n×p responses
  mat X_o;   // n×q_o, first column all ones
  std::vector<std::string> response_names;
  std::vector<std::string> covariate_names;    // excludes the intercept
  vec center;    // per-covariate mean (length d)
  vec scale;     // per-covariate sd (length d)

  index_t n() const { return Y.rows(); }
  index_t p() const { return Y.cols(); }
  index_t q_o() const { return X_o.cols(); }
  index_t d() const { return X_o.cols() - 1; }

  // n×d view of the standardized covariates (no intercept)
  mat covariates() const { return X_o.rightCols(d()); }

  // map raw covariate rows onto the stored standardization
  mat standardize_raw(const mat& raw) const;
};

// Standardize raw covariates, prepend the intercept, pair with responses.
dataset make_dataset(const mat& Y, const mat& X_raw,
                     std::vector<std::string> response_names = {},
                     std::vector<std::string> covariate_names = {});

enum class gram_choice { gram, identity };

/*! All prior hyperparameters of the model.
 *
 *  Component order throughout is (o, a, s): linear, additive, surface.
 *  Coefficient priors: vec B_i | Σ, λ_i ~ N(vec M_i, Λ_i^{1/2}ΣΛ_i^{1/2} ⊗ P_i^{-1}).
 *  Shrinkages: log λ_ij ~ N(loglambda_mean(i,j), loglambda_var(i,j)).
 *  Knots: surface rows ~ N(surface_knot_mean.row(k), surface_knot_cov);
 *  additive knots on covariate v ~ N(additive_knot_mean[v][k], additive_knot_var[v]).
 *  Σ ~ IW(n0·S0, n0).
 */
struct prior_spec {
  mat M_o, M_a, M_s;    // q_i×p coefficient prior means, default zero
  gram_choice P_o = gram_choice::gram;
  gram_choice P_a = gram_choice::identity;
  gram_choice P_s = gram_choice::identity;
  mat loglambda_mean;    // 3×p, rows ordered (o, a, s)
  mat loglambda_var;     // 3×p
  mat surface_knot_mean;          // q_s×d
  mat surface_knot_cov;           // d×d, shared by all surface knots
  std::vector<vec> additive_knot_mean;    // per covariate
  vec additive_knot_var;                  // per covariate
  double c2 = 0.0;
  double n0 = 10.0;
  mat S0;    // p×p
};

// Requested model size: surface knot count plus per-covariate additive counts.
struct knot_counts {
  std::vector<index_t> additive;    // length d, may be empty for none
  index_t surface = 0;
};

/*! Lloyd's algorithm with k-means++ seeding; 5 restarts keep the best
 *  objective (ties resolved to the lowest restart index); empty clusters
 *  are re-seeded to the point farthest from its assigned center.
 *  Deterministic given the seed.
 */
mat kmeans(const mat& points, index_t k, std::uint64_t seed,
           std::vector<double>* objective_trace = nullptr);

prior_spec default_prior(const dataset& data, const knot_counts& counts, std::uint64_t seed);

// Strided deterministic partition: observation i goes to fold i mod D.
std::vector<std::vector<index_t>> partition_folds(index_t n, index_t D);

enum class response_transform { none, logit };

dataset load_csv(const std::string& path, const std::vector<std::string>& response_columns,
                 response_transform transform);

}  // namespace surfreg

#endif
