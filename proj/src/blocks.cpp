#include "pdegnn/blocks.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

#include "pdegnn/log.hpp"

namespace pdegnn {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::gcn: return "gcn";
    case BlockKind::advection: return "advection";
    case BlockKind::burgers: return "burgers";
    case BlockKind::diffusion: return "diffusion";
    case BlockKind::wave: return "wave";
    case BlockKind::mix_ad: return "mix_ad";
    case BlockKind::mix_aw: return "mix_aw";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

BlockKind parse_block_kind(std::string_view name) {
  for (auto k : {BlockKind::gcn, BlockKind::advection, BlockKind::burgers, BlockKind::diffusion, BlockKind::wave,
                 BlockKind::mix_ad, BlockKind::mix_aw}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown block kind '" + std::string(name) +
                              "' (expected gcn, advection, burgers, diffusion, wave, mix_ad, mix_aw)");
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::relu, Activation::identity, Activation::elu, Activation::tanh}) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

std::atomic<long> g_divergence_reports{0};

template <typename T>
void check_magnitude(BlockKind kind, const Matrix<T>& u) {
  if (u.size() == 0) return;
  const double peak = static_cast<double>(u.cwiseAbs().maxCoeff());
  if (peak > kDivergenceMagnitude || peak != peak) {
    // Explicit steps blow up layer after layer once they go unstable; report a few.
    const auto k = g_divergence_reports.fetch_add(1);
    if (k < 5) {
      log::warn(std::string(to_string(kind)) + " step: |u| reached " + std::to_string(peak) +
                ", explicit scheme is diverging (reduce h)");
    }
  }
}

template <typename T>
void require_features(const char* op, const BlockState<T>& s, Index n) {
  if (s.u_curr.rows() != n) {
    throw std::invalid_argument(std::string(op) + ": state has " + std::to_string(s.u_curr.rows()) +
                                " rows, graph has " + std::to_string(n) + " nodes");
  }
  if (s.u_prev.valid() && (s.u_prev.rows() != s.u_curr.rows() || s.u_prev.cols() != s.u_curr.cols())) {
    throw std::invalid_argument(std::string(op) + ": u_prev shape differs from u_curr");
  }
}

template <typename T>
void require_kernel(const char* op, const BlockState<T>& s, Var<T> K) {
  if (K.rows() != s.u_curr.cols() || K.cols() != s.u_curr.cols()) {
    throw std::invalid_argument(std::string(op) + ": kernel must be " + std::to_string(s.u_curr.cols()) + "x" +
                                std::to_string(s.u_curr.cols()));
  }
}

template <typename T>
BlockState<T> advance(BlockKind kind, const BlockState<T>& s, Var<T> next) {
  check_magnitude(kind, next.value());
  return {next, s.u_curr};
}

// G^T act(D G (uK)) K^T, the second-order flux term.
template <typename T>
Var<T> diffusive_flux(const SparseOperator& G, Var<T> uK, Var<T> K, Activation act, std::optional<Var<T>> d) {
  auto grad = ad::spmm(G, uK);
  if (d) grad = ad::row_scale(*d, grad);
  auto div = ad::spmm_transposed(G, ad::activate(grad, act));
  return ad::matmul(div, ad::transpose(K));
}

// G^T act(D A^T (uK)), the advective flux term.
template <typename T>
Var<T> advective_flux(const SparseOperator& G, const SparseOperator& A, Var<T> uK, Activation act,
                      std::optional<Var<T>> d) {
  auto avg = ad::spmm(A, uK);
  if (d) avg = ad::row_scale(*d, avg);
  return ad::spmm_transposed(G, ad::activate(avg, act));
}

}  // namespace

template <typename T>
BlockState<T> gcn_step(const BlockState<T>& s, const SparseOperator& P, Var<T> W, Activation activation) {
  require_features("gcn_step", s, P.cols());
  require_kernel("gcn_step", s, W);
  auto next = ad::activate(ad::spmm(P, ad::matmul(s.u_curr, W)), activation);
  return advance(BlockKind::gcn, s, next);
}

template <typename T>
BlockState<T> advection_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                             const BlockParams<T>& p, StepConfig cfg, std::optional<Var<T>> edge_weight) {
  require_features("advection_step", s, G.cols());
  require_kernel("advection_step", s, p.K);
  auto uK = ad::matmul(s.u_curr, p.K);
  auto flux = advective_flux(G, A, uK, p.activation, edge_weight);
  auto next = ad::sub(s.u_curr, ad::scale(flux, static_cast<T>(cfg.h)));
  return advance(BlockKind::advection, s, next);
}

template <typename T>
BlockState<T> burgers_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                           const BlockParams<T>& p, StepConfig cfg) {
  require_features("burgers_step", s, G.cols());
  require_kernel("burgers_step", s, p.K);
  auto uK = ad::matmul(s.u_curr, p.K);
  auto flux = ad::spmm_transposed(G, ad::spmm(A, ad::hadamard(uK, uK)));
  auto next = ad::sub(s.u_curr, ad::scale(flux, static_cast<T>(cfg.h / 2)));
  return advance(BlockKind::burgers, s, next);
}

template <typename T>
BlockState<T> diffusion_step(const BlockState<T>& s, const SparseOperator& G, const BlockParams<T>& p, StepConfig cfg,
                             std::optional<Var<T>> edge_weight) {
  require_features("diffusion_step", s, G.cols());
  require_kernel("diffusion_step", s, p.K);
  auto uK = ad::matmul(s.u_curr, p.K);
  auto flux = diffusive_flux(G, uK, p.K, p.activation, edge_weight);
  auto next = ad::sub(s.u_curr, ad::scale(flux, static_cast<T>(cfg.h)));
  return advance(BlockKind::diffusion, s, next);
}

template <typename T>
BlockState<T> wave_step(const BlockState<T>& s, const SparseOperator& G, const BlockParams<T>& p, StepConfig cfg,
                        std::optional<Var<T>> edge_weight) {
  require_features("wave_step", s, G.cols());
  require_kernel("wave_step", s, p.K);
  if (!s.u_prev.valid()) throw std::invalid_argument("wave_step: u_prev not initialized");
  auto uK = ad::matmul(s.u_curr, p.K);
  auto flux = diffusive_flux(G, uK, p.K, p.activation, edge_weight);
  auto inertia = ad::sub(ad::scale(s.u_curr, T(2)), s.u_prev);
  auto next = ad::sub(inertia, ad::scale(flux, static_cast<T>(cfg.h * cfg.h)));
  return advance(BlockKind::wave, s, next);
}

namespace {

template <typename T>
struct MixTerms {
  Var<T> alpha;
  Var<T> diffusive;  // (1-a) h^2 G^T act(D_D G u K) K^T
  Var<T> advective;  // h a G^T act(D_W A^T u K)
};

template <typename T>
MixTerms<T> mix_terms(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A, const BlockParams<T>& p,
                      const MixParams<T>& mix, StepConfig cfg) {
  if (mix.alpha_raw.rows() != 1 || mix.alpha_raw.cols() != 1) throw std::invalid_argument("mix: alpha must be 1x1");
  auto alpha = ad::sigmoid(mix.alpha_raw);
  auto d_diff = ad::sigmoid(mix.d_diff_raw);
  auto d_wave = ad::sigmoid(mix.d_wave_raw);
  auto uK = ad::matmul(s.u_curr, p.K);
  auto diff_flux = diffusive_flux(G, uK, p.K, p.activation, std::optional<Var<T>>(d_diff));
  auto adv_flux = advective_flux(G, A, uK, p.activation, std::optional<Var<T>>(d_wave));
  auto c_diff = ad::scale(ad::affine(alpha, T(-1), T(1)), static_cast<T>(cfg.h * cfg.h));
  auto c_adv = ad::scale(alpha, static_cast<T>(cfg.h));
  return {alpha, ad::scale_by(c_diff, diff_flux), ad::scale_by(c_adv, adv_flux)};
}

}  // namespace

template <typename T>
BlockState<T> mix_ad_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                          const BlockParams<T>& p, const MixParams<T>& mix, StepConfig cfg) {
  require_features("mix_ad_step", s, G.cols());
  require_kernel("mix_ad_step", s, p.K);
  auto terms = mix_terms(s, G, A, p, mix, cfg);
  auto next = ad::sub(ad::sub(s.u_curr, terms.diffusive), terms.advective);
  return advance(BlockKind::mix_ad, s, next);
}

template <typename T>
BlockState<T> mix_aw_step(const BlockState<T>& s, const SparseOperator& G, const SparseOperator& A,
                          const BlockParams<T>& p, const MixParams<T>& mix, StepConfig cfg) {
  require_features("mix_aw_step", s, G.cols());
  require_kernel("mix_aw_step", s, p.K);
  if (!s.u_prev.valid()) throw std::invalid_argument("mix_aw_step: u_prev not initialized");
  auto terms = mix_terms(s, G, A, p, mix, cfg);
  auto inertia = ad::sub(ad::scale_by(ad::affine(terms.alpha, T(-1), T(2)), s.u_curr),
                         ad::scale_by(ad::affine(terms.alpha, T(-1), T(1)), s.u_prev));
  auto next = ad::sub(ad::sub(inertia, terms.diffusive), terms.advective);
  return advance(BlockKind::mix_aw, s, next);
}

template <typename T>
BlockState<T> block_step(BlockKind kind, const BlockState<T>& s, const GraphOperators& ops, const BlockParams<T>& p,
                         const MixParams<T>* mix, StepConfig cfg) {
  switch (kind) {
    case BlockKind::gcn:
      return gcn_step(s, ops.propagation, p.K, p.activation);
    case BlockKind::advection:
      return advection_step(s, ops.gradient, ops.averaging, p, cfg);
    case BlockKind::burgers:
      return burgers_step(s, ops.gradient, ops.averaging, p, cfg);
    case BlockKind::diffusion:
      return diffusion_step(s, ops.gradient, p, cfg);
    case BlockKind::wave:
      return wave_step(s, ops.gradient, p, cfg);
    case BlockKind::mix_ad:
    case BlockKind::mix_aw:
      if (mix == nullptr) throw std::invalid_argument("block_step: mixing block requires MixParams");
      return kind == BlockKind::mix_ad ? mix_ad_step(s, ops.gradient, ops.averaging, p, *mix, cfg)
                                       : mix_aw_step(s, ops.gradient, ops.averaging, p, *mix, cfg);
  }
  throw std::invalid_argument("block_step: unknown kind");
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> evaluate_block(BlockKind kind, const GraphOperators& ops, const BlockInputs<T>& in) {
  Tape<T> tape;
  const Index m = ops.gradient.rows();
  auto u = tape.constant(in.u);
  auto u_prev = in.u_prev.size() == 0 ? u : tape.constant(in.u_prev);
  BlockParams<T> p{tape.constant(in.K), in.activation};
  Matrix<T> alpha(1, 1);
  alpha(0, 0) = in.alpha_raw;
  MixParams<T> mix{tape.constant(alpha),
                   tape.constant(in.d_diff_raw.size() == 0 ? Matrix<T>(Matrix<T>::Zero(m, 1)) : in.d_diff_raw),
                   tape.constant(in.d_wave_raw.size() == 0 ? Matrix<T>(Matrix<T>::Zero(m, 1)) : in.d_wave_raw)};
  auto next = block_step(kind, BlockState<T>{u, u_prev}, ops, p, &mix, StepConfig{in.h});
  return {next.u_curr.value(), next.u_prev.value()};
}

#define PDEGNN_INSTANTIATE_BLOCKS(T)                                                                               \
  template BlockState<T> gcn_step<T>(const BlockState<T>&, const SparseOperator&, Var<T>, Activation);            \
  template BlockState<T> advection_step<T>(const BlockState<T>&, const SparseOperator&, const SparseOperator&,     \
                                           const BlockParams<T>&, StepConfig, std::optional<Var<T>>);             \
  template BlockState<T> burgers_step<T>(const BlockState<T>&, const SparseOperator&, const SparseOperator&,       \
                                         const BlockParams<T>&, StepConfig);                                      \
  template BlockState<T> diffusion_step<T>(const BlockState<T>&, const SparseOperator&, const BlockParams<T>&,     \
                                           StepConfig, std::optional<Var<T>>);                                    \
  template BlockState<T> wave_step<T>(const BlockState<T>&, const SparseOperator&, const BlockParams<T>&,          \
                                      StepConfig, std::optional<Var<T>>);                                         \
  template BlockState<T> mix_ad_step<T>(const BlockState<T>&, const SparseOperator&, const SparseOperator&,        \
                                        const BlockParams<T>&, const MixParams<T>&, StepConfig);                  \
  template BlockState<T> mix_aw_step<T>(const BlockState<T>&, const SparseOperator&, const SparseOperator&,        \
                                        const BlockParams<T>&, const MixParams<T>&, StepConfig);                  \
  template BlockState<T> block_step<T>(BlockKind, const BlockState<T>&, const GraphOperators&,                    \
                                       const BlockParams<T>&, const MixParams<T>*, StepConfig);                   \
  template std::pair<Matrix<T>, Matrix<T>> evaluate_block<T>(BlockKind, const GraphOperators&, const BlockInputs<T>&);

PDEGNN_INSTANTIATE_BLOCKS(float)
PDEGNN_INSTANTIATE_BLOCKS(double)

#undef PDEGNN_INSTANTIATE_BLOCKS

}  // namespace pdegnn
