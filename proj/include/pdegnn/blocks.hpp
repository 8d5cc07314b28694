#pragma once

#include <optional>
#include <string_view>

#include "pdegnn/autodiff.hpp"
#include "pdegnn/graph.hpp"

namespace pdegnn {

/// Layer update rules. Every kind except gcn is written in divergence form
/// (graph divergence applied outermost), so per-channel node sums are
/// conserved from layer to layer.
enum class BlockKind { gcn, advection, burgers, diffusion, wave, mix_ad, mix_aw };

std::string_view to_string(BlockKind kind);
std::string_view to_string(Activation act);
/// Throws std::invalid_argument on unknown names.
BlockKind parse_block_kind(std::string_view name);
Activation parse_activation(std::string_view name);

constexpr bool conserves_mass(BlockKind k) { return k != BlockKind::gcn; }
constexpr bool is_mixing(BlockKind k) { return k == BlockKind::mix_ad || k == BlockKind::mix_aw; }
/// Kinds whose update reads the previous layer's state.
constexpr bool is_second_order(BlockKind k) { return k == BlockKind::wave || k == BlockKind::mix_aw; }

/// Current and previous layer features (n x c each). Before the first block
/// u_prev is set to u_curr (zero initial velocity).
template <typename T>
struct BlockState {
  Var<T> u_curr;
  Var<T> u_prev;

  static BlockState start(Var<T> u0) { return {u0, u0}; }
};

/// Per-layer 1x1 kernel (c x c) and the activation shared by the model.
template <typename T>
struct BlockParams {
  Var<T> K;
  Activation activation = Activation::relu;
};

/// Raw (unconstrained) mixing parameters; the effective values are
/// sigmoid(raw), so alpha and the edge weights stay in (0, 1).
/// alpha_raw is 1 x 1, the two edge-weight vectors are m x 1.
template <typename T>
struct MixParams {
  Var<T> alpha_raw;
  Var<T> d_diff_raw;
  Var<T> d_wave_raw;
};

struct StepConfig {
  double h = 0.1;
};

/// u <- act(P u W); P is the n x n GCN propagation matrix.
template <typename T>
BlockState<T> gcn_step(const BlockState<T>& s, const SparseOperator& P, Var<T> W,
                       Activation activation = Activation::relu);

/// u <- u - h G^T act(D A^T u K). D (m x 1 effective weights) is optional.
template <typename T>
BlockState<T> advection_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                             const BlockParams<T>& p, StepConfig cfg, std::optional<Var<T>> edge_weight = {});

/// u <- u - (h/2) G^T A^T (uK o uK). No activation.
template <typename T>
BlockState<T> burgers_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                           const BlockParams<T>& p, StepConfig cfg);

/// u <- u - h G^T act(D G u K) K^T.
template <typename T>
BlockState<T> diffusion_step(const BlockState<T>& s, const SparseOperator& G, const BlockParams<T>& p, StepConfig cfg,
                             std::optional<Var<T>> edge_weight = {});

/// u <- 2u - u_prev - h^2 G^T act(D G u K) K^T.
template <typename T>
BlockState<T> wave_step(const BlockState<T>& s, const SparseOperator& G, const BlockParams<T>& p, StepConfig cfg,
                        std::optional<Var<T>> edge_weight = {});

/// u <- u - (1-a) h^2 G^T act(D_D G u K) K^T - h a G^T act(D_W A^T u K).
template <typename T>
BlockState<T> mix_ad_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                          const BlockParams<T>& p, const MixParams<T>& mix, StepConfig cfg);

/// Closed form of (1-a)(u+ - 2u + u-) + a(u+ - u) = RHS(mix_ad):
/// u+ = (2-a) u - (1-a) u_prev + RHS.
template <typename T>
BlockState<T> mix_aw_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                          const BlockParams<T>& p, const MixParams<T>& mix, StepConfig cfg);

/// Dispatch on kind. mix may be empty for non-mixing kinds.
template <typename T>
BlockState<T> block_step(BlockKind kind, const BlockState<T>& s, const GraphOperators& ops, const BlockParams<T>& p,
                         const MixParams<T>* mix, StepConfig cfg);

/// Values-only evaluation of one block on a fresh tape. The mixing raws are
/// ignored for non-mixing kinds; empty matrices select the zero raw default.
template <typename T>
struct BlockInputs {
  Matrix<T> u;
  Matrix<T> u_prev;  ///< empty: use u
  Matrix<T> K;
  Activation activation = Activation::relu;
  double h = 0.1;
  T alpha_raw = 0;
  Matrix<T> d_diff_raw;  ///< m x 1; empty: zeros
  Matrix<T> d_wave_raw;  ///< m x 1; empty: zeros
};

template <typename T>
std::pair<Matrix<T>, Matrix<T>> evaluate_block(BlockKind kind, const GraphOperators& ops, const BlockInputs<T>& in);

/// Magnitude above which an explicit step is reported as diverging.
inline constexpr double kDivergenceMagnitude = 1e6;

}  // namespace pdegnn
