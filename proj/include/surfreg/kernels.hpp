#ifndef SURFREG_KERNELS_HPP
#define SURFREG_KERNELS_HPP

#include <array>
#include <stdexcept>
#include <utility>
#include <vector>

#include "surfreg/types.hpp"

namespace surfreg {

/*! Permutation stored as gather indices.
 *
 *  entries[r] is the source position feeding output slot r, so applying
 *  the map to a vector v gives w with w[r] = v[entries[r]].
 */
struct index_map {
  std::vector<index_t> entries;
  index_t source_len = 0;

  index_t size() const { return static_cast<index_t>(entries.size()); }

  index_map inverse() const {
    index_map inv;
    inv.source_len = size();
    inv.entries.assign(entries.size(), 0);
    for (index_t r = 0; r < size(); ++r) inv.entries[entries[r]] = r;
    return inv;
  }
};

/*! Index form of the commutation matrix K_{m,n}.
 *
 *  Fill an m-by-n grid column-major with 0..mn-1 and read it transposed:
 *  t[i*n + j] = j*m + i.  Row-gathering a conformable Q by t equals
 *  K_{m,n}Q, and column-scattering (out column t[b] = Q column b) equals
 *  Q K_{m,n}.  K is never materialized outside test oracles.
 */
inline index_map commutation_index(index_t m, index_t n) {
  if (m < 1 || n < 1) throw std::invalid_argument("commutation_index: dimensions must be >= 1");
  index_map map;
  map.source_len = m * n;
  map.entries.resize(static_cast<std::size_t>(m * n));
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < n; ++j) map.entries[i * n + j] = j * m + i;
  return map;
}

// w[r] = v[entries[r]]
template <typename Derived>
vec_t<typename Derived::Scalar> gather(const index_map& map, const Eigen::MatrixBase<Derived>& v) {
  vec_t<typename Derived::Scalar> w(map.size());
  for (index_t r = 0; r < map.size(); ++r) w[r] = v[map.entries[r]];
  return w;
}

// out.row(r) = Q.row(entries[r]);  equals K·Q for a commutation_index map.
template <typename Derived>
mat_t<typename Derived::Scalar> gather_rows(const index_map& map,
                                            const Eigen::MatrixBase<Derived>& Q) {
  mat_t<typename Derived::Scalar> out(map.size(), Q.cols());
  for (index_t r = 0; r < map.size(); ++r) out.row(r) = Q.row(map.entries[r]);
  return out;
}

// out.col(entries[b]) = Q.col(b);  equals Q·K for a commutation_index map.
template <typename Derived>
mat_t<typename Derived::Scalar> scatter_cols(const index_map& map,
                                             const Eigen::MatrixBase<Derived>& Q) {
  mat_t<typename Derived::Scalar> out(Q.rows(), map.size());
  for (index_t b = 0; b < map.size(); ++b) out.col(map.entries[b]) = Q.col(b);
  return out;
}

// out(i,j) = M(entries[i], entries[j]); symmetric two-sided reorder M(c,c).
template <typename Derived>
mat_t<typename Derived::Scalar> gather_sym(const index_map& map,
                                           const Eigen::MatrixBase<Derived>& M) {
  mat_t<typename Derived::Scalar> out(map.size(), map.size());
  for (index_t j = 0; j < map.size(); ++j)
    for (index_t i = 0; i < map.size(); ++i) out(i, j) = M(map.entries[i], map.entries[j]);
  return out;
}

/*! Ordered list of dense blocks; block-diagonal when assembled. */
template <typename T>
struct block_matrix_t {
  std::vector<mat_t<T>> blocks;
  bool block_diagonal = true;

  index_t total_rows() const {
    index_t r = 0;
    for (const auto& b : blocks) r += b.rows();
    return r;
  }
  index_t total_cols() const {
    index_t c = 0;
    for (const auto& b : blocks) c += b.cols();
    return c;
  }
};

using block_matrix = block_matrix_t<double>;

template <typename T>
mat_t<T> kron(const mat_t<T>& a, const mat_t<T>& b) {
  mat_t<T> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (index_t j = 0; j < a.cols(); ++j)
    for (index_t i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/*! Blockwise Khatri-Rao product: block-diagonal of A_i ⊗ C_i.
 *
 *  Assembles the coefficient prior covariance
 *  Σ_b = (Λ^{1/2} Σ_K Λ^{1/2}) ⊛ P^{-1} and its inverse.
 */
template <typename T>
mat_t<T> khatri_rao_block(const block_matrix_t<T>& A, const block_matrix_t<T>& C) {
  if (A.blocks.size() != C.blocks.size())
    throw std::invalid_argument("khatri_rao_block: block counts differ");
  std::vector<mat_t<T>> kr;
  kr.reserve(A.blocks.size());
  index_t rows = 0, cols = 0;
  for (std::size_t i = 0; i < A.blocks.size(); ++i) {
    kr.push_back(kron(A.blocks[i], C.blocks[i]));
    rows += kr.back().rows();
    cols += kr.back().cols();
  }
  mat_t<T> out = mat_t<T>::Zero(rows, cols);
  index_t r = 0, c = 0;
  for (const auto& b : kr) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

/*! Map from component stacking b = [vec B_o; vec B_a; vec B_s] to the
 *  full-matrix stacking β = vec[B_oᵀ, B_aᵀ, B_sᵀ]ᵀ, as gather indices c
 *  with β = b(c).  Identity when p = 1 or only one component is present.
 */
inline index_map beta_reorder_map(index_t p, index_t q_o, index_t q_a, index_t q_s) {
  if (p < 0 || q_o < 1 || q_a < 0 || q_s < 0)
    throw std::invalid_argument("beta_reorder_map: invalid counts");
  const index_t q = q_o + q_a + q_s;
  const std::array<index_t, 3> comp_q = {q_o, q_a, q_s};
  index_map map;
  map.source_len = p * q;
  map.entries.resize(static_cast<std::size_t>(p * q));
  for (index_t j = 0; j < p; ++j) {
    index_t row_off = 0;    // component offset within a column of B
    index_t vec_off = 0;    // component offset within b
    for (index_t i = 0; i < 3; ++i) {
      for (index_t r = 0; r < comp_q[i]; ++r)
        map.entries[j * q + row_off + r] = vec_off + j * comp_q[i] + r;
      row_off += comp_q[i];
      vec_off += p * comp_q[i];
    }
  }
  return map;
}

/*! Column slice of C aligned with one diagonal block of ∂vec Σ_β^{-1}/∂θ'.
 *
 *  Σ_β^{-1} is Σ_b^{-1} reordered by the map c above; Σ_b^{-1} is block
 *  diagonal with component blocks W_i ⊗ P_i of size p·q_i.  For a θ that
 *  only moves block i, C·∂vec Σ_β^{-1}/∂θ' = C_i·∂vec[W_i ⊗ P_i]/∂θ'
 *  where C_i collects the C columns sitting at the vec positions of that
 *  block, in the block's own vec order.  The sparse derivative is never
 *  materialized.
 */
inline mat lemma1_component(const mat& C, index_t p, index_t q_o, index_t q_a, index_t q_s,
                            int component) {
  const index_t q = q_o + q_a + q_s;
  const index_t pq = p * q;
  if (C.cols() != pq * pq) throw std::invalid_argument("lemma1_component: C has wrong width");
  const std::array<index_t, 3> comp_q = {q_o, q_a, q_s};
  const index_t qi = comp_q[component];
  index_t off = 0;    // b-order offset of the component block
  for (int i = 0; i < component; ++i) off += p * comp_q[i];
  const index_map cinv = beta_reorder_map(p, q_o, q_a, q_s).inverse();
  const index_t m = p * qi;
  mat out(C.rows(), m * m);
  for (index_t b = 0; b < m; ++b)
    for (index_t a = 0; a < m; ++a)
      out.col(a + b * m) = C.col(cinv.entries[off + a] + cinv.entries[off + b] * pq);
  return out;
}

// The surface and additive slices used by the knot gradient.
inline std::pair<mat, mat> lemma1_slice(const mat& C, index_t p, index_t q_o, index_t q_a,
                                        index_t q_s) {
  return {lemma1_component(C, p, q_o, q_a, q_s, 2), lemma1_component(C, p, q_o, q_a, q_s, 1)};
}

}  // namespace surfreg

#endif
