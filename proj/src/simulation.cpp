#include "surfreg/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "surfreg/parallel.hpp"

namespace surfreg {

namespace {

mat error_covariance_matrix(const dgp_spec& spec) {
  const double v = spec.error_variance;
  const double c = spec.paper_exact ? spec.error_variance : spec.error_covariance;
  mat S = mat::Constant(spec.p, spec.p, c);
  S.diagonal().setConstant(spec.paper_exact ? v + 1e-6 : v);
  return S;
}

void validate(const dgp_spec& spec) {
  if (spec.n < 2 || spec.p < 1 || spec.covariates < 1 || spec.mixture_components < 1)
    throw std::invalid_argument("generate_dgp: sizes must be positive");
  if (spec.surface_knots < 1 || spec.surface_knots > spec.n)
    throw std::invalid_argument("generate_dgp: surface knot count must be in [1, n]");
  if (!(spec.component_variance > 0.0) || !(spec.error_variance > 0.0))
    throw std::invalid_argument("generate_dgp: variances must be positive");
  if (spec.p > 1 && !spec.paper_exact) {
    const double v = spec.error_variance, c = spec.error_covariance;
    if (!(v - c > 0.0) || !(v + (spec.p - 1) * c > 0.0))
      throw std::invalid_argument("generate_dgp: error covariance is not positive definite");
  }
}

// [1, points, thin-plate columns], all in raw coordinates
mat raw_design(const mat& points, const mat& knots) {
  const index_t m = points.rows(), d = points.cols(), K = knots.rows();
  mat X(m, 1 + d + K);
  X.col(0).setOnes();
  X.middleCols(1, d) = points;
  for (index_t k = 0; k < K; ++k)
    for (index_t i = 0; i < m; ++i) {
      double r2 = (points.row(i) - knots.row(k)).squaredNorm();
      X(i, 1 + d + k) = r2 == 0.0 ? 0.0 : 0.5 * r2 * std::log(r2);
    }
  return X;
}

double median_of(vec values) {
  const index_t n = values.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

synthetic_dataset generate_dgp(const dgp_spec& spec) {
  validate(spec);
  rng gen(spec.seed);
  const index_t n = spec.n, d = spec.covariates, R = spec.mixture_components;

  synthetic_dataset out;
  out.mixture_weights.resize(R);
  for (index_t r = 0; r < R; ++r) out.mixture_weights[r] = gen.runif();
  out.mixture_weights /= out.mixture_weights.sum();

  out.mixture_means.resize(R, d);
  for (index_t r = 0; r < R; ++r)
    for (index_t j = 0; j < d; ++j) out.mixture_means(r, j) = gen.runif(-1.0, 1.0);

  const double comp_sd = std::sqrt(spec.component_variance);
  auto draw_row = [&](double* row) {
    double u = gen.runif(), acc = 0.0;
    index_t r = R - 1;
    for (index_t c = 0; c < R; ++c) {
      acc += out.mixture_weights[c];
      if (u <= acc) {
        r = c;
        break;
      }
    }
    for (index_t j = 0; j < d; ++j) row[j] = out.mixture_means(r, j) + comp_sd * gen.rnorm();
  };

  out.X_raw.resize(n, d);
  vec row(d);
  for (index_t i = 0; i < n; ++i) {
    draw_row(row.data());
    out.X_raw.row(i) = row.transpose();
  }

  // true knots: data rows sampled without replacement
  std::vector<index_t> idx(n);
  std::iota(idx.begin(), idx.end(), index_t{0});
  for (index_t i = 0; i < spec.surface_knots; ++i)
    std::swap(idx[i], idx[i + gen.runif_index(n - i)]);
  out.true_knots.resize(spec.surface_knots, d);
  for (index_t k = 0; k < spec.surface_knots; ++k) out.true_knots.row(k) = out.X_raw.row(idx[k]);

  const index_t q = 1 + d + spec.surface_knots;
  out.true_B.resize(q, spec.p);
  for (index_t j = 0; j < spec.p; ++j)
    for (index_t i = 0; i < q; ++i) out.true_B(i, j) = ((j * q + i) % 2 == 0) ? -1.0 : 1.0;

  out.f_train = raw_design(out.X_raw, out.true_knots) * out.true_B;

  mat L = error_covariance_matrix(spec).llt().matrixL();
  mat Y(n, spec.p);
  for (index_t i = 0; i < n; ++i)
    Y.row(i) = out.f_train.row(i) + (L * gen.rnorm_vec(spec.p)).transpose();

  out.X_star_raw.resize(n, d);
  for (index_t i = 0; i < n; ++i) {
    draw_row(row.data());
    out.X_star_raw.row(i) = row.transpose();
  }
  out.f_star = raw_design(out.X_star_raw, out.true_knots) * out.true_B;

  out.data = make_dataset(Y, out.X_raw);
  return out;
}

double model_loss(const synthetic_dataset& synth, const knot_counts& counts,
                  const prior_spec& prior, const mh_config& cfg, index_t iterations,
                  index_t burn_in, std::uint64_t seed) {
  chain_output chain =
      run_chain(synth.data, prior, counts, cfg, iterations, burn_in, seed);
  surface_summary fit =
      posterior_surface(chain, synth.data, synth.data.standardize_raw(synth.X_star_raw));
  double total = 0.0;
  for (index_t j = 0; j < synth.f_star.cols(); ++j)
    total += surface_loss(synth.f_star.col(j), fit.mean.col(j));
  return total / static_cast<double>(synth.f_star.cols());
}

const benchmark_cell* benchmark_result::find(index_t replicate, bool free,
                                             index_t knot_count) const {
  for (const auto& cell : cells)
    if (cell.replicate == replicate && cell.free_knots == free &&
        cell.knot_count == knot_count)
      return &cell;
  return nullptr;
}

benchmark_result run_benchmark(const benchmark_config& cfg) {
  if (cfg.replicates < 1) throw std::invalid_argument("run_benchmark: need replicates");
  if (cfg.iterations < 1) throw std::invalid_argument("run_benchmark: no draws requested");

  std::vector<std::pair<bool, index_t>> models;
  for (index_t k : cfg.fixed_knot_counts) models.emplace_back(false, k);
  for (index_t k : cfg.free_knot_counts) models.emplace_back(true, k);
  if (models.empty()) throw std::invalid_argument("run_benchmark: no models requested");

  const index_t Rr = cfg.replicates;
  const auto M = static_cast<index_t>(models.size());

  std::vector<synthetic_dataset> synths(Rr);
  benchmark_result out;
  out.dnl.resize(Rr);
  parallel_for(static_cast<std::size_t>(Rr), cfg.workers, [&](std::size_t r) {
    dgp_spec spec = cfg.dgp;
    spec.seed = rng::derive(rng::derive(cfg.seed, r), 0);
    synths[r] = generate_dgp(spec);
    out.dnl[r] = dnl(synths[r].f_train, synths[r].data).mean();
  });

  out.cells.assign(static_cast<std::size_t>(Rr * M), benchmark_cell{});
  parallel_for(static_cast<std::size_t>(Rr * M), cfg.workers, [&](std::size_t task) {
    const index_t r = static_cast<index_t>(task) / M;
    const index_t m = static_cast<index_t>(task) % M;
    const std::uint64_t rep_master = rng::derive(cfg.seed, r);
    benchmark_cell& cell = out.cells[task];
    cell.replicate = r;
    cell.free_knots = models[m].first;
    cell.knot_count = models[m].second;

    knot_counts counts;
    counts.surface = cell.knot_count;
    mh_config chain_cfg = cfg.sampler;
    chain_cfg.update_knots = cell.free_knots;
    try {
      prior_spec prior = default_prior(synths[r].data, counts, rng::derive(rep_master, 2 * m + 1));
      cell.loss = model_loss(synths[r], counts, prior, chain_cfg, cfg.iterations, cfg.burn_in,
                             rng::derive(rep_master, 2 * m + 2));
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      cell.loss = std::numeric_limits<double>::quiet_NaN();
    }
  });
  return out;
}

ratio_summary loss_ratio_summary(const benchmark_result& result, index_t fixed_count,
                                 index_t free_count) {
  const index_t Rr = result.dnl.size();
  std::vector<index_t> usable;
  for (index_t r = 0; r < Rr; ++r) {
    const benchmark_cell* fx = result.find(r, false, fixed_count);
    const benchmark_cell* fr = result.find(r, true, free_count);
    if (fx && fr && !fx->failed && !fr->failed && fx->loss > 0.0 && fr->loss > 0.0)
      usable.push_back(r);
  }
  std::sort(usable.begin(), usable.end(),
            [&](index_t a, index_t b) { return result.dnl[a] < result.dnl[b]; });

  ratio_summary out;
  out.replicates = usable;
  out.log_ratio.resize(static_cast<index_t>(usable.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const index_t r = usable[i];
    out.log_ratio[static_cast<index_t>(i)] =
        std::log(result.find(r, false, fixed_count)->loss /
                 result.find(r, true, free_count)->loss);
  }
  out.median = median_of(out.log_ratio);
  const index_t t = static_cast<index_t>(usable.size()) / 3;
  if (t > 0) {
    out.median_bottom_dnl = median_of(out.log_ratio.head(t));
    out.median_top_dnl = median_of(out.log_ratio.tail(t));
  } else {
    out.median_bottom_dnl = std::numeric_limits<double>::quiet_NaN();
    out.median_top_dnl = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace surfreg
