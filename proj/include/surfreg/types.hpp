#ifndef SURFREG_TYPES_HPP
#define SURFREG_TYPES_HPP

#include <Eigen/Dense>

namespace surfreg {

template <typename T>
using mat_t = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using vec_t = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using mat = mat_t<double>;
using vec = vec_t<double>;
using index_t = Eigen::Index;

}  // namespace surfreg

#endif
