#include "surfreg/evaluation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/QR>

#include "surfreg/parallel.hpp"

namespace surfreg {

namespace {

constexpr double k_ln2pi = 1.8378770664093454836;

// dataset carrying predictor rows only, standardization inherited
dataset at_points(const dataset& base, const mat& standardized, index_t p) {
  if (standardized.cols() != base.d())
    throw std::invalid_argument("evaluation: point dimension does not match the data");
  dataset out;
  out.Y = mat::Zero(standardized.rows(), p);
  out.X_o.resize(standardized.rows(), base.q_o());
  out.X_o.col(0).setOnes();
  out.X_o.rightCols(base.d()) = standardized;
  out.center = base.center;
  out.scale = base.scale;
  return out;
}

mat raw_covariates(const dataset& data) {
  mat raw = data.covariates();
  raw.array().rowwise() *= data.scale.transpose().array();
  raw.array().rowwise() += data.center.transpose().array();
  return raw;
}

// rows iid N_p(mean row, Sigma), summed over all rows
double gaussian_loglik(const mat& Y, const mat& mean, const mat& Sigma) {
  Eigen::LLT<mat> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("lpds: stored Sigma draw is not positive definite");
  const mat L = llt.matrixL();
  double logdet = 2.0 * L.diagonal().array().log().sum();
  mat resid = Y - mean;
  mat z = L.triangularView<Eigen::Lower>().solve(resid.transpose());
  return -0.5 * Y.rows() * (Y.cols() * k_ln2pi + logdet) - 0.5 * z.squaredNorm();
}

struct axis_bounds {
  double lo = 0.0, hi = 0.0;
};

axis_bounds data_bounds(const vec& column) {
  axis_bounds b{column.minCoeff(), column.maxCoeff()};
  double pad = 0.05 * (b.hi - b.lo);
  if (pad <= 0.0) pad = 0.5;
  b.lo -= pad;
  b.hi += pad;
  return b;
}

// in-range values map to [0, cells); out-of-range clamp to the edge
index_t bin_of(double x, double lo, double hi, index_t cells, bool* flagged) {
  if (x < lo) {
    *flagged = true;
    return 0;
  }
  if (x > hi) {
    *flagged = true;
    return cells - 1;
  }
  auto ix = static_cast<index_t>((x - lo) / (hi - lo) * static_cast<double>(cells));
  return std::min(ix, cells - 1);
}

}  // namespace

mat B_at(const chain_output& chain, index_t t) {
  const index_t p = chain.p;
  const index_t q = chain.B_draws.cols() / p;
  vec row = chain.B_draws.row(t).transpose();
  return Eigen::Map<const mat>(row.data(), q, p);
}

mat sigma_at(const chain_output& chain, index_t t) {
  const index_t p = chain.p;
  mat S(p, p);
  index_t k = 0;
  for (index_t j = 0; j < p; ++j)
    for (index_t i = j; i < p; ++i) {
      S(i, j) = chain.sigma_draws(t, k++);
      S(j, i) = S(i, j);
    }
  return S;
}

mat loglambda_at(const chain_output& chain, index_t t) {
  const index_t p = chain.p;
  mat L(3, p);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) L(i, j) = chain.loglambda_draws(t, i * p + j);
  return L;
}

knot_set knots_at(const chain_output& chain, index_t t) {
  return chain.knot_shape.with_flat(chain.knot_draws.row(t).transpose());
}

lpds_report lpds(const dataset& data, const knot_counts& counts, const lpds_config& cfg,
                 std::uint64_t seed) {
  const index_t n = data.n(), D = cfg.folds;
  if (D < 2) throw std::invalid_argument("lpds: need at least 2 folds");
  if (D > n) throw std::invalid_argument("lpds: more folds than observations");
  if (cfg.iterations < 1) throw std::invalid_argument("lpds: no draws requested");
  index_t q = data.q_o() + counts.surface;
  for (index_t c : counts.additive) q += c;

  const auto folds = partition_folds(n, D);
  for (const auto& fold : folds)
    if (n - static_cast<index_t>(fold.size()) < q)
      throw std::invalid_argument("lpds: fold training set smaller than the coefficient count");

  const mat raw = raw_covariates(data);
  lpds_report report;
  report.per_fold.resize(D);
  report.fold_sizes.resize(D);
  report.draws = cfg.iterations;

  parallel_for(static_cast<std::size_t>(D), cfg.workers, [&](std::size_t fi) {
    const auto& test_idx = folds[fi];
    const index_t n_test = static_cast<index_t>(test_idx.size());
    const index_t n_train = n - n_test;

    std::vector<char> in_test(n, 0);
    for (index_t i : test_idx) in_test[i] = 1;
    mat Y_train(n_train, data.p()), raw_train(n_train, data.d());
    mat Y_test(n_test, data.p()), raw_test(n_test, data.d());
    index_t r = 0, s = 0;
    for (index_t i = 0; i < n; ++i) {
      if (in_test[i]) {
        Y_test.row(s) = data.Y.row(i);
        raw_test.row(s++) = raw.row(i);
      } else {
        Y_train.row(r) = data.Y.row(i);
        raw_train.row(r++) = raw.row(i);
      }
    }

    const std::uint64_t fold_seed = rng::derive(seed, fi);
    dataset train =
        make_dataset(Y_train, raw_train, data.response_names, data.covariate_names);
    prior_spec prior = cfg.prior ? cfg.prior(train, counts, fold_seed)
                                 : default_prior(train, counts, fold_seed);
    chain_output chain =
        run_chain(train, prior, counts, cfg.sampler, cfg.iterations, cfg.burn_in, fold_seed);

    dataset test_points = at_points(train, train.standardize_raw(raw_test), data.p());
    const index_t M = chain.n_draws();
    vec ll(M);
    for (index_t t = 0; t < M; ++t) {
      design_matrix dm = build_design(test_points, knots_at(chain, t));
      ll[t] = gaussian_loglik(Y_test, dm.X * B_at(chain, t), sigma_at(chain, t));
    }
    double top = ll.maxCoeff();
    report.per_fold[fi] =
        top + std::log((ll.array() - top).exp().sum()) - std::log(static_cast<double>(M));
    report.fold_sizes[fi] = n_test;
  });
  return report;
}

vec dnl(const mat& true_surface, const dataset& data) {
  if (true_surface.rows() != data.n())
    throw std::invalid_argument("dnl: surface length does not match the data");
  Eigen::ColPivHouseholderQR<mat> qr(data.X_o);
  if (qr.rank() < data.q_o()) throw std::runtime_error("dnl: rank-deficient linear design");
  mat resid = true_surface - data.X_o * qr.solve(true_surface);
  return (resid.colwise().squaredNorm() / static_cast<double>(data.n()))
      .cwiseSqrt()
      .transpose();
}

double surface_loss(const vec& true_f, const vec& posterior_mean_f) {
  if (true_f.size() != posterior_mean_f.size() || true_f.size() == 0)
    throw std::invalid_argument("surface_loss: length mismatch");
  return (true_f - posterior_mean_f).squaredNorm() / static_cast<double>(true_f.size());
}

double inefficiency_factor(const vec& series) {
  const index_t n = series.size();
  if (n < 50) throw std::invalid_argument("inefficiency_factor: need at least 50 draws");
  if ((series.array() == series[0]).all()) return std::numeric_limits<double>::infinity();
  vec centered = series.array() - series.mean();
  const double c0 = centered.squaredNorm() / static_cast<double>(n);
  if (!(c0 > 0.0)) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (index_t k = 1; k < n; ++k) {
    double rho = centered.head(n - k).dot(centered.tail(n - k)) / static_cast<double>(n) / c0;
    if (rho <= 0.0) break;
    sum += rho;
  }
  return std::max(1.0, 1.0 + 2.0 * sum);
}

double surface_if_summary(const chain_output& chain, const dataset& data, index_t n_points,
                          std::uint64_t seed) {
  const index_t M = chain.n_draws();
  if (M == 0) throw std::invalid_argument("surface_if_summary: empty chain");
  if (n_points < 1) throw std::invalid_argument("surface_if_summary: need at least one point");

  rng gen(rng::derive(seed, 0));
  mat pts(n_points, data.d());
  for (index_t i = 0; i < n_points; ++i)
    pts.row(i) = data.covariates().row(gen.runif_index(data.n()));
  dataset point_data = at_points(data, pts, chain.p);

  mat series(M, n_points * chain.p);    // column = one (point, response) trace
  for (index_t t = 0; t < M; ++t) {
    design_matrix dm = build_design(point_data, knots_at(chain, t));
    mat fitted = dm.X * B_at(chain, t);
    series.row(t) = Eigen::Map<const vec>(fitted.data(), fitted.size()).transpose();
  }

  double total = 0.0;
  for (index_t c = 0; c < series.cols(); ++c) total += inefficiency_factor(series.col(c));
  return total / static_cast<double>(series.cols());
}

double ess_per_minute(const chain_output& chain, double mean_surface_if) {
  const double minutes = chain.seconds_total / 60.0;
  if (minutes <= 0.0) throw std::invalid_argument("ess_per_minute: no elapsed time recorded");
  return static_cast<double>(chain.n_draws()) / (mean_surface_if * minutes);
}

heatmap_set knot_heatmap(const chain_output& chain, const dataset& data,
                         const heatmap_request& req) {
  if (req.resolution_x < 1 || req.resolution_y < 1)
    throw std::invalid_argument("knot_heatmap: resolution must be positive");
  const index_t d = data.d();
  const index_t q_s = chain.knot_shape.q_s();
  const index_t M = chain.n_draws();
  heatmap_set out;

  if (q_s > 0) {
    if (d < 2)
      throw std::invalid_argument("knot_heatmap: surface view needs at least two covariates");
    if (req.axis_x >= d || req.axis_y >= d || req.axis_x == req.axis_y)
      throw std::invalid_argument("knot_heatmap: invalid covariate axis pair");
    axis_bounds bx, by;
    if (req.auto_bounds) {
      bx = data_bounds(data.covariates().col(req.axis_x));
      by = data_bounds(data.covariates().col(req.axis_y));
    } else {
      bx = {req.x_lo, req.x_hi};
      by = {req.y_lo, req.y_hi};
      if (bx.lo >= bx.hi || by.lo >= by.hi)
        throw std::invalid_argument("knot_heatmap: zero-area bounds");
    }
    heatmap_grid& g = out.surface;
    g.x_lo = bx.lo;
    g.x_hi = bx.hi;
    g.y_lo = by.lo;
    g.y_hi = by.hi;
    g.counts.setZero(req.resolution_y, req.resolution_x);
    for (index_t t = 0; t < M; ++t)
      for (index_t j = 0; j < q_s; ++j) {
        double x = chain.knot_draws(t, j * d + req.axis_x);
        double y = chain.knot_draws(t, j * d + req.axis_y);
        bool fx = false, fy = false;
        index_t ix = bin_of(x, bx.lo, bx.hi, req.resolution_x, &fx);
        index_t iy = bin_of(y, by.lo, by.hi, req.resolution_y, &fy);
        g.counts(iy, ix) += 1;
        if (fx || fy) g.clamped += 1;
      }
  }

  index_t offset = q_s * d;
  for (std::size_t v = 0; v < chain.knot_shape.additive.size(); ++v) {
    const index_t count = chain.knot_shape.additive[v].size();
    heatmap_grid g;
    axis_bounds b;
    if (req.auto_bounds) {
      b = data_bounds(data.covariates().col(static_cast<index_t>(v)));
    } else {
      b = {req.x_lo, req.x_hi};
      if (b.lo >= b.hi) throw std::invalid_argument("knot_heatmap: zero-area bounds");
    }
    g.x_lo = b.lo;
    g.x_hi = b.hi;
    g.counts.setZero(1, req.resolution_x);
    for (index_t t = 0; t < M; ++t)
      for (index_t k = 0; k < count; ++k) {
        bool flagged = false;
        index_t ix =
            bin_of(chain.knot_draws(t, offset + k), b.lo, b.hi, req.resolution_x, &flagged);
        g.counts(0, ix) += 1;
        if (flagged) g.clamped += 1;
      }
    out.additive.push_back(std::move(g));
    offset += count;
  }
  return out;
}

surface_summary posterior_surface(const chain_output& chain, const dataset& data,
                                  const mat& standardized_points) {
  const index_t M = chain.n_draws();
  if (M == 0) throw std::invalid_argument("posterior_surface: empty chain");
  dataset point_data = at_points(data, standardized_points, chain.p);

  surface_summary out;
  out.mean = mat::Zero(standardized_points.rows(), chain.p);
  mat m2 = out.mean;
  for (index_t t = 0; t < M; ++t) {
    design_matrix dm = build_design(point_data, knots_at(chain, t));
    mat fitted = dm.X * B_at(chain, t);
    mat delta = fitted - out.mean;
    out.mean += delta / static_cast<double>(t + 1);
    m2 += delta.cwiseProduct(fitted - out.mean);
  }
  out.sd = (m2 / static_cast<double>(M)).cwiseSqrt();
  return out;
}

}  // namespace surfreg
