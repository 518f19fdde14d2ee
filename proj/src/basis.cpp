#include "surfreg/basis.hpp"

namespace surfreg {

vec knot_set::flatten() const {
  vec out(n_coords());
  index_t k = 0;
  const index_t d = surface.cols();
  for (index_t j = 0; j < surface.rows(); ++j)
    for (index_t c = 0; c < d; ++c) out[k++] = surface(j, c);
  for (const auto& a : additive)
    for (index_t i = 0; i < a.size(); ++i) out[k++] = a[i];
  return out;
}

knot_set knot_set::with_flat(const vec& coords) const {
  if (coords.size() != n_coords())
    throw std::invalid_argument("knot_set::with_flat: wrong coordinate count");
  knot_set out = *this;
  index_t k = 0;
  const index_t d = surface.cols();
  for (index_t j = 0; j < out.surface.rows(); ++j)
    for (index_t c = 0; c < d; ++c) out.surface(j, c) = coords[k++];
  for (auto& a : out.additive)
    for (index_t i = 0; i < a.size(); ++i) a[i] = coords[k++];
  return out;
}

namespace {

// r² ln r without finiteness checks, for the builders' inner loops
inline double tp(double r2) { return r2 == 0.0 ? 0.0 : 0.5 * r2 * std::log(r2); }

}  // namespace

design_matrix build_design(const dataset& data, const knot_set& knots) {
  const index_t n = data.n(), d = data.d();
  if (knots.q_s() > 0 && knots.surface.cols() != d)
    throw std::invalid_argument("build_design: surface knot dimension mismatch");
  if (static_cast<index_t>(knots.additive.size()) > d)
    throw std::invalid_argument("build_design: more additive knot groups than covariates");
  for (const auto& a : knots.additive)
    if (!a.allFinite()) throw std::invalid_argument("build_design: non-finite additive knot");
  if (!knots.surface.allFinite())
    throw std::invalid_argument("build_design: non-finite surface knot");

  design_matrix out;
  out.q_o = data.q_o();
  out.q_a = knots.q_a();
  out.q_s = knots.q_s();
  out.X.resize(n, out.q());
  out.X.leftCols(out.q_o) = data.X_o;

  index_t col = out.q_o;
  for (std::size_t v = 0; v < knots.additive.size(); ++v) {
    const auto colv = data.X_o.col(static_cast<index_t>(v) + 1);
    for (index_t k = 0; k < knots.additive[v].size(); ++k, ++col) {
      const double xi = knots.additive[v][k];
      for (index_t i = 0; i < n; ++i) {
        double diff = colv[i] - xi;
        out.X(i, col) = tp(diff * diff);
      }
    }
  }
  const mat cov = data.covariates();
  for (index_t j = 0; j < out.q_s; ++j, ++col) {
    for (index_t i = 0; i < n; ++i) {
      double r2 = (cov.row(i) - knots.surface.row(j)).squaredNorm();
      out.X(i, col) = tp(r2);
    }
  }
  return out;
}

design_gradient design_gradient_of(const dataset& data, const knot_set& knots) {
  const index_t n = data.n();
  const mat cov = data.covariates();
  design_gradient out;

  // ∂(r² ln r)/∂ξ = −(1 + 2 ln r)(x − ξ)ᵀ, zero at r = 0 by continuity
  out.surface.reserve(knots.q_s());
  for (index_t j = 0; j < knots.q_s(); ++j) {
    mat block = mat::Zero(n, cov.cols());
    for (index_t i = 0; i < n; ++i) {
      auto diff = cov.row(i) - knots.surface.row(j);
      double r2 = diff.squaredNorm();
      if (r2 > 0.0) block.row(i) = -(1.0 + std::log(r2)) * diff;
    }
    out.surface.push_back(std::move(block));
  }

  out.additive.reserve(knots.q_a());
  for (std::size_t v = 0; v < knots.additive.size(); ++v) {
    const auto colv = data.X_o.col(static_cast<index_t>(v) + 1);
    for (index_t k = 0; k < knots.additive[v].size(); ++k) {
      vec g = vec::Zero(n);
      for (index_t i = 0; i < n; ++i) {
        double diff = colv[i] - knots.additive[v][k];
        if (diff != 0.0) g[i] = -(1.0 + std::log(diff * diff)) * diff;
      }
      out.additive.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace surfreg
