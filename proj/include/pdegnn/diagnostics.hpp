#pragma once

#include <vector>

#include "pdegnn/dense.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/network.hpp"

namespace pdegnn {

/// Per-layer feature statistics of a block stack.
struct SmoothingProfile {
  std::vector<double> variance;             ///< mean over channels of node-wise variance
  std::vector<double> normalized_variance;  ///< same for rows scaled by (deg + 1)^-1/2
  std::vector<std::vector<double>> channel_sums;
};

/// The normalized variance vanishes exactly on span((deg + 1)^1/2), the
/// fixed direction of the GCN propagation matrix, so it measures collapse of
/// GCN stacks on irregular graphs where the plain variance does not go to zero.
SmoothingProfile smoothing_profile(const std::vector<MatrixD>& layers, const Graph& g);

/// Profile of the eval-mode block stack (embedding output plus every block).
template <typename T>
SmoothingProfile smoothing_profile(Model<T>& model, const Matrix<T>& features);

}  // namespace pdegnn
