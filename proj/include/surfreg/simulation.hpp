#ifndef SURFREG_SIMULATION_HPP
#define SURFREG_SIMULATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "surfreg/evaluation.hpp"
#include "surfreg/sampler.hpp"

namespace surfreg {

/*! Synthetic-surface recipe.
 *
 *  Covariates are mixture draws: weights u_r/Σu_l with u ~ U(0,1)^R,
 *  component means uniform on (−1,1) per coordinate, spherical
 *  component covariance.  The true surface is a thin-plate expansion
 *  on `surface_knots` data rows (drawn without replacement) plus an
 *  intercept and linear terms, with coefficients ±1 repeating
 *  column-major.  Errors are equicovariant normal rows.
 *
 *  The error_variance/error_covariance pair (0.1, 0.1) is singular for
 *  p ≥ 2; the default off-diagonal is 0.05, and `paper_exact` restores
 *  0.1 with a 1e-6 diagonal jitter instead.
 */
struct dgp_spec {
  index_t n = 200;
  index_t p = 2;
  index_t covariates = 5;
  index_t mixture_components = 5;
  double component_variance = 0.1;
  index_t surface_knots = 5;
  double error_variance = 0.1;
  double error_covariance = 0.05;
  bool paper_exact = false;
  std::uint64_t seed = 0;
};

/*! A generated dataset together with everything the truth is made of.
 *  f values are reproducible from X_raw (or X_star_raw), true_knots and
 *  true_B; the fitted-model dataset is the standardized `data`.
 */
struct synthetic_dataset {
  dataset data;
  mat X_raw;              // n×d covariates before standardization
  mat true_knots;         // surface_knots×d rows of X_raw
  mat true_B;             // (1+d+surface_knots)×p, entries ±1
  mat f_train;            // n×p noiseless surface at X_raw
  mat X_star_raw;         // n×d fresh evaluation covariates
  mat f_star;             // n×p noiseless surface at X_star_raw
  vec mixture_weights;
  mat mixture_means;      // components×d
};

synthetic_dataset generate_dgp(const dgp_spec& spec);

/*! Fit one model on a synthetic dataset and score the posterior mean
 *  surface against the truth on the held-out points: mean over
 *  responses of (1/n*) Σ [f* − f̃]².
 */
double model_loss(const synthetic_dataset& synth, const knot_counts& counts,
                  const prior_spec& prior, const mh_config& cfg, index_t iterations,
                  index_t burn_in, std::uint64_t seed);

/*! Fixed-versus-free-knot replicate study.
 *
 *  Per replicate: a fresh DGP draw, its degree of nonlinearity (mean
 *  over responses), then one chain per model.  Fixed-knot models freeze
 *  the knots at the prior k-means centers (update_knots off); shrinkage
 *  and covariance stay estimated in both.  Chain failures are recorded
 *  in the cell, never fatal.
 */
struct benchmark_cell {
  index_t replicate = 0;
  bool free_knots = false;
  index_t knot_count = 0;
  double loss = 0.0;
  bool failed = false;
  std::string error;
};

struct benchmark_result {
  std::vector<benchmark_cell> cells;
  vec dnl;    // per replicate

  const benchmark_cell* find(index_t replicate, bool free, index_t knot_count) const;
};

struct benchmark_config {
  index_t replicates = 20;
  dgp_spec dgp;
  std::vector<index_t> fixed_knot_counts = {5, 15};
  std::vector<index_t> free_knot_counts = {5};
  mh_config sampler;
  index_t iterations = 2000;
  index_t burn_in = 500;
  int workers = 1;
  std::uint64_t seed = 0;
};

benchmark_result run_benchmark(const benchmark_config& cfg);

/*! log(loss_fixed/loss_free) per replicate for one model pair, with
 *  medians over all replicates and within the bottom and top DNL
 *  terciles (tercile size = replicates/3, rounded down).  Replicates
 *  with a failed cell in the pair are dropped.
 */
struct ratio_summary {
  vec log_ratio;                      // usable replicates, DNL order kept
  std::vector<index_t> replicates;    // which ones survived
  double median = 0.0;
  double median_bottom_dnl = 0.0;
  double median_top_dnl = 0.0;
};

ratio_summary loss_ratio_summary(const benchmark_result& result, index_t fixed_count,
                                 index_t free_count);

}  // namespace surfreg

#endif
