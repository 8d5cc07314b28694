#include "pdegnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "pdegnn/log.hpp"

namespace pdegnn {

Graph::Graph(Index n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
  if (n_ < 0) throw std::invalid_argument("graph: negative node count");
  std::vector<std::pair<Index, Index>> keys;
  keys.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (e.tail < 0 || e.tail >= n_ || e.head < 0 || e.head >= n_) {
      throw std::invalid_argument("graph: edge endpoint out of range (" + std::to_string(e.tail) + ", " +
                                  std::to_string(e.head) + ")");
    }
    if (e.tail == e.head) throw std::invalid_argument("graph: self-loop at node " + std::to_string(e.tail));
    keys.emplace_back(std::min(e.tail, e.head), std::max(e.tail, e.head));
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw std::invalid_argument("graph: duplicate undirected edge");
  }
}

Graph Graph::from_undirected(Index n, std::span<const std::pair<Index, Index>> pairs) {
  std::vector<std::pair<Index, Index>> keys;
  keys.reserve(pairs.size());
  Index self_loops = 0;
  for (auto [a, b] : pairs) {
    if (a == b) {
      ++self_loops;
      continue;
    }
    keys.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(keys.begin(), keys.end());
  const auto before = keys.size();
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  if (self_loops > 0) log::warn("dropped " + std::to_string(self_loops) + " self-loop(s)");
  if (keys.size() != before) {
    log::warn("dropped " + std::to_string(before - keys.size()) + " duplicate undirected edge(s)");
  }
  std::vector<Edge> edges;
  edges.reserve(keys.size());
  for (auto [a, b] : keys) edges.push_back({a, b});
  return Graph(n, std::move(edges));
}

std::vector<Index> Graph::degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(n_), 0);
  for (const auto& e : edges_) {
    ++deg[static_cast<std::size_t>(e.tail)];
    ++deg[static_cast<std::size_t>(e.head)];
  }
  return deg;
}

Graph Graph::permuted(std::span<const Index> perm) const {
  if (static_cast<Index>(perm.size()) != n_) throw std::invalid_argument("graph: permutation length mismatch");
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const auto& e : edges_) {
    edges.push_back({perm[static_cast<std::size_t>(e.tail)], perm[static_cast<std::size_t>(e.head)]});
  }
  return Graph(n_, std::move(edges));
}

bool Graph::is_connected() const {
  if (n_ <= 1) return true;
  std::vector<Index> parent(static_cast<std::size_t>(n_));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  Index components = n_;
  for (const auto& e : edges_) {
    auto a = find(e.tail);
    auto b = find(e.head);
    if (a != b) {
      parent[static_cast<std::size_t>(a)] = b;
      --components;
    }
  }
  return components == 1;
}

// ---------------------------------------------------------------------------

namespace {

void compress(Index rows, std::vector<Triplet>& entries, std::vector<Index>& ptr, std::vector<Index>& idx,
              std::vector<double>& val) {
  std::sort(entries.begin(), entries.end(),
            [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  idx.resize(entries.size());
  val.resize(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ++ptr[static_cast<std::size_t>(entries[k].row) + 1];
    idx[k] = entries[k].col;
    val[k] = entries[k].value;
  }
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
}

}  // namespace

SparseOperator::SparseOperator(Index rows, Index cols, std::vector<Triplet> entries) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("sparse: negative dimension");
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw std::invalid_argument("sparse: entry index out of range");
    }
  }
  compress(rows_, entries, row_ptr_, col_idx_, values_);
  for (std::size_t k = 1; k < entries.size(); ++k) {
    if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
      throw std::invalid_argument("sparse: duplicate entry (" + std::to_string(entries[k].row) + ", " +
                                  std::to_string(entries[k].col) + ")");
    }
  }
  for (auto& t : entries) std::swap(t.row, t.col);
  compress(cols_, entries, t_row_ptr_, t_col_idx_, t_values_);
}

std::vector<Triplet> SparseOperator::entries() const {
  std::vector<Triplet> out;
  out.reserve(values_.size());
  for (Index r = 0; r < rows_; ++r) {
    for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k) {
      out.push_back({r, col_idx_[static_cast<std::size_t>(k)], values_[static_cast<std::size_t>(k)]});
    }
  }
  return out;
}

MatrixD SparseOperator::to_dense() const {
  MatrixD d = MatrixD::Zero(rows_, cols_);
  for (const auto& t : entries()) d(t.row, t.col) = t.value;
  return d;
}

template <typename T>
Matrix<T> SparseOperator::multiply(Index out_rows, const std::vector<Index>& ptr, const std::vector<Index>& idx,
                                   const std::vector<double>& val, const Matrix<T>& x) {
  Matrix<T> y = Matrix<T>::Zero(out_rows, x.cols());
  for (Index r = 0; r < out_rows; ++r) {
    auto out = y.row(r);
    for (auto k = ptr[static_cast<std::size_t>(r)]; k < ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      out += static_cast<T>(val[static_cast<std::size_t>(k)]) * x.row(idx[static_cast<std::size_t>(k)]);
    }
  }
  return y;
}

template <typename T>
Matrix<T> SparseOperator::apply(const Matrix<T>& x) const {
  if (x.rows() != cols_) {
    throw std::invalid_argument("spmm: operator has " + std::to_string(cols_) + " columns, operand has " +
                                std::to_string(x.rows()) + " rows");
  }
  return multiply(rows_, row_ptr_, col_idx_, values_, x);
}

template <typename T>
Matrix<T> SparseOperator::apply_transposed(const Matrix<T>& x) const {
  if (x.rows() != rows_) {
    throw std::invalid_argument("spmm_transposed: operator has " + std::to_string(rows_) + " rows, operand has " +
                                std::to_string(x.rows()) + " rows");
  }
  return multiply(cols_, t_row_ptr_, t_col_idx_, t_values_, x);
}

template MatrixF SparseOperator::apply<float>(const MatrixF&) const;
template MatrixD SparseOperator::apply<double>(const MatrixD&) const;
template MatrixF SparseOperator::apply_transposed<float>(const MatrixF&) const;
template MatrixD SparseOperator::apply_transposed<double>(const MatrixD&) const;

// ---------------------------------------------------------------------------

SparseOperator build_gradient(const Graph& g) {
  std::vector<Triplet> t;
  t.reserve(2 * static_cast<std::size_t>(g.m()));
  Index e = 0;
  for (const auto& edge : g.edges()) {
    t.push_back({e, edge.tail, -1.0});
    t.push_back({e, edge.head, 1.0});
    ++e;
  }
  return SparseOperator(g.m(), g.n(), std::move(t));
}

SparseOperator build_averaging(const Graph& g) {
  std::vector<Triplet> t;
  t.reserve(2 * static_cast<std::size_t>(g.m()));
  Index e = 0;
  for (const auto& edge : g.edges()) {
    t.push_back({e, edge.tail, 0.5});
    t.push_back({e, edge.head, 0.5});
    ++e;
  }
  return SparseOperator(g.m(), g.n(), std::move(t));
}

SparseOperator build_gcn_propagation(const Graph& g) {
  const auto deg = g.degrees();
  std::vector<double> inv_sqrt(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(g.n() + 2 * g.m()));
  for (Index i = 0; i < g.n(); ++i) {
    const auto s = inv_sqrt[static_cast<std::size_t>(i)];
    t.push_back({i, i, s * s});
  }
  for (const auto& e : g.edges()) {
    const double w = inv_sqrt[static_cast<std::size_t>(e.tail)] * inv_sqrt[static_cast<std::size_t>(e.head)];
    t.push_back({e.tail, e.head, w});
    t.push_back({e.head, e.tail, w});
  }
  return SparseOperator(g.n(), g.n(), std::move(t));
}

}  // namespace pdegnn
