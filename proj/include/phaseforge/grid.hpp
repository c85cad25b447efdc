#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace phaseforge {

// Image-like 2D array, indexed (row = y, col = x).
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Grid<bool>;
using OrderGrid = Grid<std::int32_t>;

template <typename DerivedA, typename DerivedB>
bool same_shape(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

}  // namespace phaseforge
