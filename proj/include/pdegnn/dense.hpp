#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace pdegnn {

using Index = std::int64_t;

/// Row-major dense matrix; node features are stored one node per row.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

}  // namespace pdegnn
