#include "pdegnn/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace pdegnn::oracle {

DenseMatrix DenseMatrix::from(const MatrixD& m) {
  DenseMatrix d(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) d(i, j) = m(i, j);
  return d;
}

MatrixD DenseMatrix::to_eigen() const {
  MatrixD m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = (*this)(i, j);
  return m;
}

namespace {

DenseMatrix mul(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("oracle: inner dimensions differ");
  DenseMatrix z(x.rows, y.cols);
  for (Index i = 0; i < x.rows; ++i)
    for (Index k = 0; k < x.cols; ++k) {
      const double v = x(i, k);
      if (v == 0.0) continue;
      for (Index j = 0; j < y.cols; ++j) z(i, j) += v * y(k, j);
    }
  return z;
}

DenseMatrix transposed(const DenseMatrix& x) {
  DenseMatrix t(x.cols, x.rows);
  for (Index i = 0; i < x.rows; ++i)
    for (Index j = 0; j < x.cols; ++j) t(j, i) = x(i, j);
  return t;
}

// a * x + b * y
DenseMatrix combine(double a, const DenseMatrix& x, double b, const DenseMatrix& y) {
  DenseMatrix z(x.rows, x.cols);
  for (std::size_t k = 0; k < z.a.size(); ++k) z.a[k] = a * x.a[k] + b * y.a[k];
  return z;
}

double act(Activation f, double v) {
  switch (f) {
    case Activation::relu: return v > 0 ? v : 0;
    case Activation::identity: return v;
    case Activation::elu: return v > 0 ? v : std::exp(v) - 1;
    case Activation::tanh: return std::tanh(v);
  }
  return v;
}

DenseMatrix apply(Activation f, DenseMatrix x) {
  for (auto& v : x.a) v = act(f, v);
  return x;
}

DenseMatrix weight_rows(DenseMatrix x, const std::vector<double>* w) {
  if (w == nullptr) return x;
  for (Index i = 0; i < x.rows; ++i)
    for (Index j = 0; j < x.cols; ++j) x(i, j) *= (*w)[static_cast<std::size_t>(i)];
  return x;
}

// G^T act(w . G u K) K^T
DenseMatrix diffusive(const DenseOperators& ops, const DenseMatrix& u, const DenseBlockParams& p,
                      const std::vector<double>* w) {
  auto inner = apply(p.activation, weight_rows(mul(ops.G, mul(u, p.K)), w));
  return mul(mul(transposed(ops.G), inner), transposed(p.K));
}

// G^T act(w . A u K); A holds the averaging rows, the transpose of the
// node-to-edge map written A^T in the update rules.
DenseMatrix advective(const DenseOperators& ops, const DenseMatrix& u, const DenseBlockParams& p,
                      const std::vector<double>* w) {
  auto inner = apply(p.activation, weight_rows(mul(ops.A, mul(u, p.K)), w));
  return mul(transposed(ops.G), inner);
}

}  // namespace

DenseOperators dense_operators(const Graph& g) {
  const Index n = g.n();
  const Index m = g.m();
  DenseOperators ops{DenseMatrix(m, n), DenseMatrix(m, n), DenseMatrix(n, n)};
  std::vector<double> deg(static_cast<std::size_t>(n), 1.0);
  for (Index e = 0; e < m; ++e) {
    const auto [t, h] = g.edges()[static_cast<std::size_t>(e)];
    ops.G(e, t) = -1.0;
    ops.G(e, h) = 1.0;
    ops.A(e, t) = 0.5;
    ops.A(e, h) = 0.5;
    deg[static_cast<std::size_t>(t)] += 1;
    deg[static_cast<std::size_t>(h)] += 1;
  }
  // P = D^-1/2 (adjacency + I) D^-1/2 with degrees counting the self loop.
  for (Index i = 0; i < n; ++i) ops.P(i, i) = 1.0 / deg[static_cast<std::size_t>(i)];
  for (const auto& e : g.edges()) {
    const double v = 1.0 / std::sqrt(deg[static_cast<std::size_t>(e.tail)] * deg[static_cast<std::size_t>(e.head)]);
    ops.P(e.tail, e.head) = v;
    ops.P(e.head, e.tail) = v;
  }
  return ops;
}

DenseMatrix dense_mixing_rhs(const DenseOperators& ops, const DenseMatrix& u, const DenseBlockParams& p, double h) {
  const auto diff = diffusive(ops, u, p, &p.d_diff);
  const auto adv = advective(ops, u, p, &p.d_wave);
  return combine(-(1 - p.alpha) * h * h, diff, -h * p.alpha, adv);
}

std::pair<DenseMatrix, DenseMatrix> dense_block_step(BlockKind kind, const DenseOperators& ops, const DenseMatrix& u,
                                                     const DenseMatrix& u_prev, const DenseBlockParams& p, double h) {
  const std::vector<double>* w = p.edge_weight ? &*p.edge_weight : nullptr;
  DenseMatrix next;
  switch (kind) {
    case BlockKind::gcn:
      next = apply(p.activation, mul(ops.P, mul(u, p.K)));
      break;
    case BlockKind::advection:
      next = combine(1, u, -h, advective(ops, u, p, w));
      break;
    case BlockKind::burgers: {
      auto sq = mul(u, p.K);
      for (auto& v : sq.a) v *= v;
      next = combine(1, u, -h / 2, mul(transposed(ops.G), mul(ops.A, sq)));
      break;
    }
    case BlockKind::diffusion:
      next = combine(1, u, -h, diffusive(ops, u, p, w));
      break;
    case BlockKind::wave:
      next = combine(1, combine(2, u, -1, u_prev), -h * h, diffusive(ops, u, p, w));
      break;
    case BlockKind::mix_ad:
      next = combine(1, u, 1, dense_mixing_rhs(ops, u, p, h));
      break;
    case BlockKind::mix_aw:
      next = combine(1, combine(2 - p.alpha, u, -(1 - p.alpha), u_prev), 1, dense_mixing_rhs(ops, u, p, h));
      break;
  }
  return {std::move(next), u};
}

double mix_aw_residual(const DenseOperators& ops, const DenseMatrix& u_next, const DenseMatrix& u,
                       const DenseMatrix& u_prev, const DenseBlockParams& p, double h) {
  const auto rhs = dense_mixing_rhs(ops, u, p, h);
  double worst = 0;
  for (std::size_t k = 0; k < u.a.size(); ++k) {
    const double lhs = (1 - p.alpha) * (u_next.a[k] - 2 * u.a[k] + u_prev.a[k]) + p.alpha * (u_next.a[k] - u.a[k]);
    worst = std::max(worst, std::abs(lhs - rhs.a[k]));
  }
  return worst;
}

std::vector<double> fd_gradient(const std::function<double()>& loss, std::span<double> param, double step) {
  std::vector<double> g(param.size());
  for (std::size_t k = 0; k < param.size(); ++k) {
    const double keep = param[k];
    param[k] = keep + step;
    const double up = loss();
    param[k] = keep - step;
    const double down = loss();
    param[k] = keep;
    g[k] = (up - down) / (2 * step);
  }
  return g;
}

ConservationReport conservation_audit(const std::vector<MatrixD>& layers, bool conserving_kind) {
  ConservationReport r;
  r.conserving_kind = conserving_kind;
  if (layers.empty()) return r;
  const auto& first = layers.front();
  for (const auto& u : layers) {
    double drift = 0;
    for (Index j = 0; j < u.cols(); ++j) {
      double s0 = 0;
      double s = 0;
      for (Index i = 0; i < u.rows(); ++i) {
        s0 += first(i, j);
        s += u(i, j);
      }
      drift = std::max(drift, std::abs(s - s0));
    }
    r.layer_drift.push_back(drift);
    r.max_drift = std::max(r.max_drift, drift);
  }
  return r;
}

template <typename T>
ConservationReport conservation_audit(Model<T>& model, const Matrix<T>& features) {
  Tape<T> tape;
  Rng unused(0);
  std::vector<Var<T>> layers;
  forward(model, tape, tape.constant(features), false, unused, &layers);
  std::vector<MatrixD> values;
  for (auto& v : layers) values.push_back(v.value().template cast<double>());
  return conservation_audit(values, conserves_mass(model.config().block));
}

template ConservationReport conservation_audit<float>(Model<float>&, const MatrixF&);
template ConservationReport conservation_audit<double>(Model<double>&, const MatrixD&);

}  // namespace pdegnn::oracle
