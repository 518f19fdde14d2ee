#ifndef SURFREG_EVALUATION_HPP
#define SURFREG_EVALUATION_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "surfreg/sampler.hpp"

namespace surfreg {

// Reconstruct the state pieces stored in draw row t of a chain.
mat B_at(const chain_output& chain, index_t t);           // q×p
mat sigma_at(const chain_output& chain, index_t t);       // p×p symmetric
mat loglambda_at(const chain_output& chain, index_t t);   // 3×p
knot_set knots_at(const chain_output& chain, index_t t);

/*! D-fold out-of-sample log predictive density score.
 *
 *  Folds are the strided partition of partition_folds; fold d is scored
 *  by a chain fit on its complement.  Per fold,
 *    log p(Ỹ_d | Ỹ_{−d}) ≈ logsumexp_m Σ_{i∈τ_d} log N(y_i; B_m'x_i, Σ_m) − log M
 *  over the M stored draws, with the test design rebuilt per draw from
 *  that draw's knots.
 */
struct lpds_report {
  vec per_fold;                      // length D
  std::vector<index_t> fold_sizes;
  index_t draws = 0;                 // stored draws per fold chain

  double mean() const { return per_fold.size() == 0 ? 0.0 : per_fold.mean(); }
};

using prior_factory =
    std::function<prior_spec(const dataset& train, const knot_counts&, std::uint64_t seed)>;

struct lpds_config {
  index_t folds = 5;
  index_t iterations = 2000;    // recorded draws per fold chain (post burn-in)
  index_t burn_in = 500;
  mh_config sampler;
  int workers = 1;
  prior_factory prior;    // empty: default_prior on each training set
};

/*! Fold chains run independently (parallel over folds) with seeds
 *  derived from `seed`; the report is identical for any worker count.
 *  Training covariates are re-standardized per fold and the held-out
 *  rows mapped through that fold's standardization.
 */
lpds_report lpds(const dataset& data, const knot_counts& counts, const lpds_config& cfg,
                 std::uint64_t seed);

/*! Degree of nonlinearity per response column:
 *  √(n^{-1} Σ_i [f(x_i) − ĝ(x_i)]²) with ĝ the least-squares fit of f
 *  on the linear design X_o.  Zero iff f lies in X_o's column space.
 */
vec dnl(const mat& true_surface, const dataset& data);

// Mean squared distance (1/n*) Σ [f − f̃]² between two surface evaluations.
double surface_loss(const vec& true_f, const vec& posterior_mean_f);

/*! Inefficiency factor 1 + 2 Σ ρ_k of a scalar chain.  Autocorrelations
 *  accumulate until the first non-positive estimate; the result is
 *  floored at 1.0.  A constant series has no finite IF and reports +∞.
 */
double inefficiency_factor(const vec& series);

/*! Mean IF of the fitted-surface series at n_points covariate rows
 *  sampled (with replacement, seeded) from the data.  Every point and
 *  response forms one series; a constant series contributes +∞.
 */
double surface_if_summary(const chain_output& chain, const dataset& data, index_t n_points,
                          std::uint64_t seed);

// draws / (mean surface IF × elapsed minutes); throws on zero elapsed time.
double ess_per_minute(const chain_output& chain, double mean_surface_if);

/*! Knot-location histogram over the stored draws.
 *
 *  Surface knots are binned on a 2-d view (a covariate axis pair);
 *  additive knots per covariate on 1-d grids (counts has one row).
 *  Out-of-bounds knots land in the nearest edge cell and are tallied
 *  in `clamped`.  Total count = draws × knots of that kind.
 */
struct heatmap_grid {
  double x_lo = 0.0, x_hi = 0.0;
  double y_lo = 0.0, y_hi = 0.0;    // unused (0,0) for 1-d grids
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;    // rows_y × cols_x
  index_t clamped = 0;

  std::int64_t total() const { return counts.sum(); }
};

struct heatmap_request {
  index_t resolution_x = 70, resolution_y = 70;
  index_t axis_x = 0, axis_y = 1;    // covariate indices of the surface view
  // explicit bounds; with auto_bounds the data range is expanded 5% per side
  bool auto_bounds = true;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
};

struct heatmap_set {
  heatmap_grid surface;                  // empty counts when the model has no surface knots
  std::vector<heatmap_grid> additive;    // one per covariate with additive knots
};

heatmap_set knot_heatmap(const chain_output& chain, const dataset& data,
                         const heatmap_request& req);

/*! Posterior mean and pointwise sd of the fitted regression surface at
 *  the given standardized covariate rows, with the basis rebuilt from
 *  each draw's knots.  sd uses the population convention (a single draw
 *  gives an all-zero sd surface).
 */
struct surface_summary {
  mat mean;    // g×p
  mat sd;      // g×p
};

surface_summary posterior_surface(const chain_output& chain, const dataset& data,
                                  const mat& standardized_points);

}  // namespace surfreg

#endif
