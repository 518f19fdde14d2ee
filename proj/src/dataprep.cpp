#include "surfreg/dataprep.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "surfreg/rng.hpp"

namespace surfreg {

mat dataset::standardize_raw(const mat& raw) const {
  if (raw.cols() != d()) throw std::invalid_argument("standardize_raw: wrong covariate count");
  mat out = raw;
  for (index_t j = 0; j < d(); ++j)
    out.col(j) = (raw.col(j).array() - center[j]) / scale[j];
  return out;
}

dataset make_dataset(const mat& Y, const mat& X_raw, std::vector<std::string> response_names,
                     std::vector<std::string> covariate_names) {
  if (Y.rows() != X_raw.rows()) throw std::invalid_argument("make_dataset: row counts differ");
  const index_t n = X_raw.rows(), d = X_raw.cols();
  dataset data;
  data.Y = Y;
  data.center = X_raw.colwise().mean();
  data.scale.resize(d);
  for (index_t j = 0; j < d; ++j) {
    double var = (X_raw.col(j).array() - data.center[j]).square().sum() / n;
    data.scale[j] = std::sqrt(var);
    if (!(data.scale[j] > 0.0))
      throw std::invalid_argument("make_dataset: constant covariate column " + std::to_string(j));
  }
  data.X_o.resize(n, d + 1);
  data.X_o.col(0).setOnes();
  for (index_t j = 0; j < d; ++j)
    data.X_o.col(j + 1) = (X_raw.col(j).array() - data.center[j]) / data.scale[j];
  if (response_names.empty())
    for (index_t j = 0; j < Y.cols(); ++j) response_names.push_back("y" + std::to_string(j));
  if (covariate_names.empty())
    for (index_t j = 0; j < d; ++j) covariate_names.push_back("x" + std::to_string(j));
  data.response_names = std::move(response_names);
  data.covariate_names = std::move(covariate_names);
  return data;
}

namespace {

double sq_dist(const mat& points, index_t i, const mat& centers, index_t c) {
  return (points.row(i) - centers.row(c)).squaredNorm();
}

// One Lloyd run from a k-means++ initialization; returns final objective.
double lloyd_run(const mat& points, index_t k, rng& gen, mat& centers,
                 std::vector<double>* objective_trace) {
  const index_t m = points.rows();
  centers.resize(k, points.cols());

  // k-means++: first center uniform, then proportional to squared distance
  index_t first = gen.runif_index(m);
  centers.row(0) = points.row(first);
  vec d2(m);
  for (index_t i = 0; i < m; ++i) d2[i] = sq_dist(points, i, centers, 0);
  for (index_t c = 1; c < k; ++c) {
    double total = d2.sum();
    index_t pick = 0;
    if (total > 0.0) {
      double u = gen.runif() * total, cum = 0.0;
      for (index_t i = 0; i < m; ++i) {
        cum += d2[i];
        if (u <= cum) {
          pick = i;
          break;
        }
      }
    } else {
      pick = gen.runif_index(m);
    }
    centers.row(c) = points.row(pick);
    for (index_t i = 0; i < m; ++i) d2[i] = std::min(d2[i], sq_dist(points, i, centers, c));
  }

  std::vector<index_t> assign(m, 0);
  double objective = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    // assignment (ties to the lowest center index)
    double obj = 0.0;
    for (index_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      index_t best_c = 0;
      for (index_t c = 0; c < k; ++c) {
        double dd = sq_dist(points, i, centers, c);
        if (dd < best) {
          best = dd;
          best_c = c;
        }
      }
      assign[i] = best_c;
      obj += best;
    }
    if (objective_trace) objective_trace->push_back(obj);

    // update
    mat sums = mat::Zero(k, points.cols());
    std::vector<index_t> counts(k, 0);
    for (index_t i = 0; i < m; ++i) {
      sums.row(assign[i]) += points.row(i);
      ++counts[assign[i]];
    }
    std::vector<bool> claimed(m, false);
    for (index_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // re-seed to the point farthest from its assigned center
        double far = -1.0;
        index_t far_i = 0;
        for (index_t i = 0; i < m; ++i) {
          if (claimed[i]) continue;
          double dd = sq_dist(points, i, centers, assign[i]);
          if (dd > far) {
            far = dd;
            far_i = i;
          }
        }
        centers.row(c) = points.row(far_i);
        claimed[far_i] = true;
      }
    }
    if (obj >= objective - 1e-12 && iter > 0) {
      objective = std::min(objective, obj);
      break;
    }
    objective = obj;
  }
  return objective;
}

index_t distinct_rows(const mat& points) {
  index_t count = 0;
  for (index_t i = 0; i < points.rows(); ++i) {
    bool dup = false;
    for (index_t j = 0; j < i && !dup; ++j)
      dup = (points.row(i) - points.row(j)).cwiseAbs().maxCoeff() == 0.0;
    if (!dup) ++count;
  }
  return count;
}

}  // namespace

mat kmeans(const mat& points, index_t k, std::uint64_t seed,
           std::vector<double>* objective_trace) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > distinct_rows(points))
    throw std::invalid_argument("kmeans: k exceeds the number of distinct points");
  const int restarts = 5;
  mat best_centers;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    rng gen(rng::derive(seed, static_cast<std::uint64_t>(r)));
    mat centers;
    double obj = lloyd_run(points, k, gen, centers,
                           (r == 0 && objective_trace) ? objective_trace : nullptr);
    if (obj < best_obj) {    // strict: ties keep the lowest restart index
      best_obj = obj;
      best_centers = centers;
    }
  }
  return best_centers;
}

prior_spec default_prior(const dataset& data, const knot_counts& counts, std::uint64_t seed) {
  const index_t n = data.n(), p = data.p(), d = data.d(), q_o = data.q_o();
  prior_spec prior;
  prior.c2 = static_cast<double>(n);

  const index_t q_s = counts.surface;
  index_t q_a = 0;
  for (index_t c : counts.additive) q_a += c;
  prior.M_o = mat::Zero(q_o, p);
  prior.M_a = mat::Zero(q_a, p);
  prior.M_s = mat::Zero(q_s, p);

  prior.loglambda_mean = mat::Constant(3, p, std::log(static_cast<double>(n)) - 1.5 * std::log(2.0));
  prior.loglambda_var = mat::Constant(3, p, std::log(2.0));

  // surface knots: prior means at k-means centers of the covariate rows,
  // shared covariance c²(X̃ᵀX̃)^{-1} on the covariate block (intercept
  // excluded: knots live in the d-dimensional covariate space)
  if (q_s > 0) {
    mat cov_rows = data.covariates();
    prior.surface_knot_mean = kmeans(cov_rows, q_s, rng::derive(seed, 1000));
    mat gram = cov_rows.transpose() * cov_rows;
    prior.surface_knot_cov = prior.c2 * gram.llt().solve(mat::Identity(d, d));
  } else {
    prior.surface_knot_mean = mat(0, d);
    prior.surface_knot_cov = mat::Identity(d, d);
  }

  // additive knots: per-covariate one-dimensional k-means, variance c²(aᵀa)^{-1}
  prior.additive_knot_mean.resize(counts.additive.size());
  prior.additive_knot_var = vec::Zero(counts.additive.size());
  for (std::size_t v = 0; v < counts.additive.size(); ++v) {
    vec col = data.X_o.col(static_cast<index_t>(v) + 1);
    prior.additive_knot_var[v] = prior.c2 / col.squaredNorm();
    if (counts.additive[v] > 0) {
      mat centers = kmeans(col, counts.additive[v], rng::derive(seed, 2000 + v));
      prior.additive_knot_mean[v] = centers.col(0);
      std::sort(prior.additive_knot_mean[v].begin(), prior.additive_knot_mean[v].end());
    }
  }

  // S0: OLS residual covariance of Y on X_o (maximum-likelihood scaling)
  Eigen::LLT<mat> gram_llt(data.X_o.transpose() * data.X_o);
  if (gram_llt.info() != Eigen::Success)
    throw std::runtime_error("default_prior: rank-deficient X_o in OLS for S0");
  mat Bhat = gram_llt.solve(data.X_o.transpose() * data.Y);
  mat resid = data.Y - data.X_o * Bhat;
  prior.S0 = resid.transpose() * resid / n;
  Eigen::SelfAdjointEigenSolver<mat> es(prior.S0);
  if (es.eigenvalues().minCoeff() < 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
    std::cerr << "warning: near-singular OLS residual covariance; adding 1e-8 jitter to S0\n";
    prior.S0 += 1e-8 * mat::Identity(p, p);
  }
  prior.n0 = 10.0;
  return prior;
}

std::vector<std::vector<index_t>> partition_folds(index_t n, index_t D) {
  if (D < 2 || D > n) throw std::invalid_argument("partition_folds: need 2 <= D <= n");
  std::vector<std::vector<index_t>> folds(D);
  for (index_t i = 0; i < n; ++i) folds[i % D].push_back(i);
  return folds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

dataset load_csv(const std::string& path, const std::vector<std::string>& response_columns,
                 response_transform transform) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);

  std::vector<index_t> resp_idx;
  for (const auto& name : response_columns) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error("load_csv: response column '" + name + "' not in header");
    resp_idx.push_back(static_cast<index_t>(it - header.begin()));
  }
  if (resp_idx.empty()) throw std::runtime_error("load_csv: no response columns given");

  std::vector<std::vector<double>> rows;
  index_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               " has wrong field count");
    std::vector<double> row;
    for (const auto& f : fields) {
      if (f.empty())
        throw std::runtime_error("load_csv: missing value on line " + std::to_string(line_no));
      std::size_t pos = 0;
      double x = std::stod(f, &pos);
      if (pos != f.size())
        throw std::runtime_error("load_csv: non-numeric field '" + f + "' on line " +
                                 std::to_string(line_no));
      row.push_back(x);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

  const index_t n = static_cast<index_t>(rows.size());
  const index_t p = static_cast<index_t>(resp_idx.size());
  const index_t d = static_cast<index_t>(header.size()) - p;
  mat Y(n, p), X_raw(n, d);
  std::vector<std::string> cov_names;
  for (index_t i = 0; i < n; ++i) {
    for (index_t j = 0; j < p; ++j) Y(i, j) = rows[i][resp_idx[j]];
    index_t c = 0;
    for (std::size_t col = 0; col < header.size(); ++col) {
      if (std::find(resp_idx.begin(), resp_idx.end(), static_cast<index_t>(col)) !=
          resp_idx.end())
        continue;
      X_raw(i, c++) = rows[i][col];
    }
  }
  for (std::size_t col = 0; col < header.size(); ++col)
    if (std::find(resp_idx.begin(), resp_idx.end(), static_cast<index_t>(col)) == resp_idx.end())
      cov_names.push_back(header[col]);

  if (transform == response_transform::logit) {
    for (index_t i = 0; i < n; ++i)
      for (index_t j = 0; j < p; ++j) {
        double y = Y(i, j);
        if (!(y > 0.0 && y < 1.0))
          throw std::runtime_error("load_csv: logit transform needs responses in (0,1), got " +
                                   std::to_string(y));
        Y(i, j) = std::log(y / (1.0 - y));
      }
  }
  return make_dataset(Y, X_raw, response_columns, cov_names);
}

}  // namespace surfreg
