#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "surfreg/dataprep.hpp"
#include "surfreg/rng.hpp"

using namespace surfreg;

namespace {

struct temp_csv {
  std::string path;
  explicit temp_csv(const std::string& name, const std::string& body) : path(name) {
    std::ofstream out(path);
    out << body;
  }
  ~temp_csv() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("make_dataset standardizes with the population convention") {
  mat X(4, 2), Y(4, 1);
  X << 1, 10, 2, 20, 3, 30, 4, 40;
  Y << 1, 2, 3, 4;
  dataset data = make_dataset(Y, X, {"y"}, {"a", "b"});

  CHECK(data.n() == 4);
  CHECK(data.p() == 1);
  CHECK(data.q_o() == 3);
  CHECK(data.d() == 2);
  CHECK((data.X_o.col(0).array() == 1.0).all());
  for (index_t j = 0; j < 2; ++j) {
    CHECK(data.covariates().col(j).mean() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(data.covariates().col(j).squaredNorm() / 4.0 == doctest::Approx(1.0));
  }
  CHECK(data.center[0] == doctest::Approx(2.5));
  CHECK(data.scale[1] == doctest::Approx(std::sqrt(125.0)));

  mat raw(1, 2);
  raw << 2.5, 25.0;
  CHECK(data.standardize_raw(raw).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((data.standardize_raw(X) - data.covariates()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("make_dataset rejects degenerate input") {
  mat X(3, 2), Y(3, 1);
  X << 1, 5, 2, 5, 3, 5;    // second column constant
  Y.setZero();
  CHECK_THROWS(make_dataset(Y, X));

  mat X2(3, 1), Y2(2, 1);
  X2.setRandom();
  Y2.setZero();
  CHECK_THROWS(make_dataset(Y2, X2));
}

TEST_CASE("k-means recovers separated clusters and is deterministic") {
  rng gen(7);
  mat pts(60, 2);
  mat truth(3, 2);
  truth << -5, -5, 0, 6, 5, -5;
  for (index_t i = 0; i < 60; ++i)
    for (index_t j = 0; j < 2; ++j) pts(i, j) = truth(i % 3, j) + 0.05 * gen.rnorm();

  std::vector<double> trace;
  mat centers = kmeans(pts, 3, 99, &trace);
  REQUIRE(centers.rows() == 3);
  for (std::size_t t = 1; t < trace.size(); ++t) CHECK(trace[t] <= trace[t - 1] + 1e-9);

  // every true center is matched by some fitted center
  for (index_t t = 0; t < 3; ++t) {
    double best = 1e100;
    for (index_t c = 0; c < 3; ++c)
      best = std::min(best, (centers.row(c) - truth.row(t)).norm());
    CHECK(best < 0.1);
  }

  mat again = kmeans(pts, 3, 99);
  CHECK((centers - again).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("k-means edge cases") {
  mat pts(4, 1);
  pts << 1, 2, 3, 10;
  mat one = kmeans(pts, 1, 3);
  CHECK(one(0, 0) == doctest::Approx(4.0));

  mat all = kmeans(pts, 4, 3);
  std::set<double> got(all.data(), all.data() + 4);
  CHECK(got == std::set<double>({1.0, 2.0, 3.0, 10.0}));

  CHECK_THROWS(kmeans(pts, 5, 3));
  CHECK_THROWS(kmeans(pts, 0, 3));
}

TEST_CASE("default prior: closed-form pieces") {
  rng gen(13);
  const index_t n = 256, d = 2, p = 2;
  mat X(n, d), Y(n, p);
  for (index_t i = 0; i < n; ++i) {
    for (index_t j = 0; j < d; ++j) X(i, j) = gen.runif(-1, 1);
    for (index_t j = 0; j < p; ++j) Y(i, j) = X(i, 0) + gen.rnorm();
  }
  dataset data = make_dataset(Y, X);
  knot_counts counts;
  counts.surface = 5;
  counts.additive = {3, 3};
  prior_spec prior = default_prior(data, counts, 17);

  CHECK(prior.c2 == doctest::Approx(256.0));
  CHECK(prior.n0 == doctest::Approx(10.0));
  const double want_mean = std::log(256.0) - 1.5 * std::log(2.0);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) {
      CHECK(prior.loglambda_mean(i, j) == doctest::Approx(want_mean).epsilon(1e-12));
      CHECK(prior.loglambda_var(i, j) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }

  // surface knot covariance: c^2 (Z'Z)^-1 on the standardized covariate block
  mat Z = data.covariates();
  mat want_cov = 256.0 * (Z.transpose() * Z).inverse();
  CHECK((prior.surface_knot_cov - want_cov).cwiseAbs().maxCoeff() < 1e-8);

  for (index_t v = 0; v < d; ++v) {
    CHECK(prior.additive_knot_var[v] ==
          doctest::Approx(256.0 / Z.col(v).squaredNorm()).epsilon(1e-12));
    REQUIRE(prior.additive_knot_mean[v].size() == 3);
    CHECK(prior.additive_knot_mean[v][0] < prior.additive_knot_mean[v][1]);
    CHECK(prior.additive_knot_mean[v][1] < prior.additive_knot_mean[v][2]);
  }

  CHECK(prior.surface_knot_mean.rows() == 5);
  CHECK(prior.surface_knot_mean.cols() == d);

  // S0: maximum-likelihood residual covariance of the linear fit
  mat bhat = (data.X_o.transpose() * data.X_o).ldlt().solve(data.X_o.transpose() * Y);
  mat resid = Y - data.X_o * bhat;
  mat want_S0 = resid.transpose() * resid / static_cast<double>(n);
  CHECK((prior.S0 - want_S0).cwiseAbs().maxCoeff() < 1e-10);

  CHECK(prior.M_o.rows() == data.q_o());
  CHECK(prior.M_a.rows() == 6);
  CHECK(prior.M_s.rows() == 5);
  CHECK(prior.M_s.cols() == p);
  CHECK(prior.M_o.cwiseAbs().maxCoeff() == 0.0);

  prior_spec again = default_prior(data, counts, 17);
  CHECK((again.surface_knot_mean - prior.surface_knot_mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((again.additive_knot_mean[1] - prior.additive_knot_mean[1]).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("fold partition is strided and exhaustive") {
  auto folds = partition_folds(10, 3);
  REQUIRE(folds.size() == 3);
  CHECK(folds[0] == std::vector<index_t>({0, 3, 6, 9}));
  CHECK(folds[1] == std::vector<index_t>({1, 4, 7}));
  CHECK(folds[2] == std::vector<index_t>({2, 5, 8}));
  CHECK_THROWS(partition_folds(10, 1));
  CHECK_THROWS(partition_folds(3, 4));
}

TEST_CASE("csv loading: responses by name, logit transform, errors") {
  temp_csv file("tmp_dataprep_ok.csv",
                "y1,x1,y2,x2\n"
                "0.5,1.0,0.25,4\n"
                "0.75,2.0,0.5,5\n"
                "0.25,3.0,0.75,6\n");
  dataset data = load_csv(file.path, {"y1", "y2"}, response_transform::none);
  CHECK(data.n() == 3);
  CHECK(data.p() == 2);
  CHECK(data.d() == 2);
  CHECK(data.response_names == std::vector<std::string>({"y1", "y2"}));
  CHECK(data.covariate_names == std::vector<std::string>({"x1", "x2"}));
  CHECK(data.Y(1, 0) == doctest::Approx(0.75));
  CHECK(data.Y(2, 1) == doctest::Approx(0.75));
  CHECK(data.center[0] == doctest::Approx(2.0));

  dataset lg = load_csv(file.path, {"y1"}, response_transform::logit);
  CHECK(lg.Y(0, 0) == doctest::Approx(0.0));
  CHECK(lg.Y(1, 0) == doctest::Approx(std::log(3.0)));

  CHECK_THROWS(load_csv("no_such_file.csv", {"y1"}, response_transform::none));
  CHECK_THROWS(load_csv(file.path, {"nope"}, response_transform::none));
}

TEST_CASE("csv loading: malformed input is rejected with context") {
  temp_csv short_row("tmp_dataprep_short.csv", "y,x\n1,2\n3\n");
  CHECK_THROWS(load_csv(short_row.path, {"y"}, response_transform::none));

  temp_csv bad_num("tmp_dataprep_nan.csv", "y,x\n1,2\nfoo,3\n");
  CHECK_THROWS(load_csv(bad_num.path, {"y"}, response_transform::none));

  temp_csv bad_logit("tmp_dataprep_logit.csv", "y,x\n0.5,1\n1.5,2\n");
  CHECK_THROWS(load_csv(bad_logit.path, {"y"}, response_transform::logit));
}
