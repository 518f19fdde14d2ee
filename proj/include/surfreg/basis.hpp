#ifndef SURFREG_BASIS_HPP
#define SURFREG_BASIS_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "surfreg/dataprep.hpp"
#include "surfreg/types.hpp"

namespace surfreg {

/*! Sampled knot locations.
 *
 *  Surface knots are rows of `surface` and live in the standardized
 *  d-dimensional covariate space (intercept excluded).  Additive knots
 *  are scalars grouped per covariate; counts may differ per covariate.
 *
 *  Flattening order, used for the joint MH update and all gradients:
 *  surface knots first (knot-major, coordinate-minor), then additive
 *  knots (covariate-major, knot-minor).
 */
struct knot_set {
  std::vector<vec> additive;    // per covariate
  mat surface;                  // q_s×d

  index_t q_s() const { return surface.rows(); }
  index_t q_a() const {
    index_t q = 0;
    for (const auto& a : additive) q += a.size();
    return q;
  }
  index_t n_coords() const { return q_s() * surface.cols() + q_a(); }

  vec flatten() const;
  knot_set with_flat(const vec& coords) const;    // same shape, new values
};

/*! X = [X_o, X_a, X_s] with column block sizes (q_o, q_a, q_s). */
struct design_matrix {
  mat X;
  index_t q_o = 0, q_a = 0, q_s = 0;

  index_t q() const { return q_o + q_a + q_s; }
  auto X_oblock() const { return X.leftCols(q_o); }
  auto X_ablock() const { return X.middleCols(q_o, q_a); }
  auto X_sblock() const { return X.rightCols(q_s); }
};

/*! Nonzero blocks of ∂vec X/∂(knot coordinates).
 *
 *  Basis column j of X_s depends only on surface knot j, so the full
 *  derivative is block diagonal; only the n×d block per surface knot
 *  and the n×1 column per additive knot are stored.
 */
struct design_gradient {
  std::vector<mat> surface;     // q_s blocks, each n×d: row i = ∂X_s(i,j)/∂ξ_j
  std::vector<vec> additive;    // q_a columns in X_a column order
};

/*! Thin-plate basis r² ln r, r = ‖x − ξ‖, with value 0 at r = 0. */
template <typename Derived1, typename Derived2>
typename Derived1::Scalar thinplate_value(const Eigen::MatrixBase<Derived1>& x,
                                          const Eigen::MatrixBase<Derived2>& xi) {
  using T = typename Derived1::Scalar;
  if (x.size() != xi.size() || x.size() < 1)
    throw std::invalid_argument("thinplate_value: dimension mismatch");
  if (!x.allFinite() || !xi.allFinite())
    throw std::invalid_argument("thinplate_value: non-finite input");
  T r2 = (x - xi).squaredNorm();
  if (r2 == T(0)) return T(0);
  return T(0.5) * r2 * std::log(r2);    // r² ln r = ½ r² ln r²
}

design_matrix build_design(const dataset& data, const knot_set& knots);
design_gradient design_gradient_of(const dataset& data, const knot_set& knots);

}  // namespace surfreg

#endif
