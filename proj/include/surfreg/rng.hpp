#ifndef SURFREG_RNG_HPP
#define SURFREG_RNG_HPP

#include <cstdint>
#include <random>

#include <Eigen/Cholesky>

#include "surfreg/types.hpp"

namespace surfreg {

/*! Seeded random number generator with derived sub-streams.
 *
 *  Every concurrent task (chain, fold, replicate) gets its own stream
 *  derived from the master seed by index, so results do not depend on
 *  the worker count or on scheduling order.
 */
class rng {
 public:
  explicit rng(std::uint64_t seed) : gen_(seed) {}

  // splitmix64 step; decorrelates consecutive stream indices.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double runif() {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }

  double runif(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }

  double rnorm() {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }

  double rgamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(gen_);
  }

  double rchisq(double df) { return rgamma(0.5 * df, 2.0); }

  // Uniform integer in [0, n).
  index_t runif_index(index_t n) {
    std::uniform_int_distribution<index_t> d(0, n - 1);
    return d(gen_);
  }

  vec rnorm_vec(index_t n) {
    vec z(n);
    for (index_t i = 0; i < n; ++i) z[i] = rnorm();
    return z;
  }

  // N(mean, L Lᵀ) given the lower Cholesky factor L of the covariance.
  vec rmvnorm_chol(const vec& mean, const mat& chol_lower) {
    return mean + chol_lower * rnorm_vec(mean.size());
  }

  // Multivariate t with location mu, scale matrix L Lᵀ and df nu.
  vec rmvt_chol(const vec& mu, const mat& chol_lower, double nu) {
    double w = rchisq(nu) / nu;
    return mu + chol_lower * rnorm_vec(mu.size()) / std::sqrt(w);
  }

  // Wishart(S, nu) via the Bartlett decomposition, S = L Lᵀ.
  mat rwishart_chol(const mat& chol_lower, double nu) {
    const index_t p = chol_lower.rows();
    mat A = mat::Zero(p, p);
    for (index_t i = 0; i < p; ++i) {
      A(i, i) = std::sqrt(rchisq(nu - static_cast<double>(i)));
      for (index_t j = 0; j < i; ++j) A(i, j) = rnorm();
    }
    mat LA = chol_lower * A;
    return LA * LA.transpose();
  }

  // Inverse-Wishart(Psi, nu): W ~ Wishart(Psi^{-1}, nu), return W^{-1}.
  mat rinvwishart(const mat& psi, double nu) {
    Eigen::LLT<mat> llt(psi);
    mat psi_inv = llt.solve(mat::Identity(psi.rows(), psi.rows()));
    mat W = rwishart_chol(mat(psi_inv.llt().matrixL()), nu);
    return W.llt().solve(mat::Identity(psi.rows(), psi.rows()));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace surfreg

#endif
