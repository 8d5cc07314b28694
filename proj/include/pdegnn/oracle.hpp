#pragma once

// Independent reference implementations used only for verification. Nothing
// here calls the sparse operators or the block code it is meant to check.

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pdegnn/blocks.hpp"
#include "pdegnn/dense.hpp"
#include "pdegnn/diagnostics.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/network.hpp"

namespace pdegnn::oracle {

/// Plain row-major matrix with loop-based arithmetic.
struct DenseMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(Index r, Index c) : rows(r), cols(c), a(static_cast<std::size_t>(r * c), 0.0) {}

  double& operator()(Index i, Index j) { return a[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(Index i, Index j) const { return a[static_cast<std::size_t>(i * cols + j)]; }

  static DenseMatrix from(const MatrixD& m);
  MatrixD to_eigen() const;
};

/// Dense G (m x n), A (m x n) and P (n x n) assembled edge by edge.
struct DenseOperators {
  DenseMatrix G;
  DenseMatrix A;
  DenseMatrix P;
};

DenseOperators dense_operators(const Graph& g);

/// Effective (already squashed) block parameters.
struct DenseBlockParams {
  DenseMatrix K;
  Activation activation = Activation::relu;
  double alpha = 0.5;
  std::vector<double> d_diff;  ///< mixing kinds: effective D_D
  std::vector<double> d_wave;  ///< mixing kinds: effective D_W
  /// Optional edge weight for the pure advection/diffusion/wave kinds.
  std::optional<std::vector<double>> edge_weight;
};

/// One layer of `kind`; returns (u_next, u_prev_next).
std::pair<DenseMatrix, DenseMatrix> dense_block_step(BlockKind kind, const DenseOperators& ops, const DenseMatrix& u,
                                                     const DenseMatrix& u_prev, const DenseBlockParams& p, double h);

/// Right-hand side shared by both mixing rules:
/// -(1-a) h^2 G^T act(D_D G u K) K^T - h a G^T act(D_W A^T u K).
DenseMatrix dense_mixing_rhs(const DenseOperators& ops, const DenseMatrix& u, const DenseBlockParams& p, double h);

/// Max-norm of (1-a)(u+ - 2u + u-) + a(u+ - u) - RHS.
double mix_aw_residual(const DenseOperators& ops, const DenseMatrix& u_next, const DenseMatrix& u,
                       const DenseMatrix& u_prev, const DenseBlockParams& p, double h);

/// Central differences per coordinate. `param` is perturbed in place and
/// restored. Inputs sitting on a ReLU kink give unreliable estimates; callers
/// move inputs away from kinks first.
std::vector<double> fd_gradient(const std::function<double()>& loss, std::span<double> param, double step = 1e-5);

struct ConservationReport {
  bool conserving_kind = true;       ///< false for gcn: reported, never asserted
  double max_drift = 0;              ///< max over layers and channels of |sum_l - sum_0|
  std::vector<double> layer_drift;   ///< depth + 1 entries
};

/// Runs the model's embedding and block stack (eval mode) and measures how far
/// per-channel node sums move away from their value entering the stack.
template <typename T>
ConservationReport conservation_audit(Model<T>& model, const Matrix<T>& features);
ConservationReport conservation_audit(const std::vector<MatrixD>& layers, bool conserving_kind);

using pdegnn::SmoothingProfile;
using pdegnn::smoothing_profile;

}  // namespace pdegnn::oracle
