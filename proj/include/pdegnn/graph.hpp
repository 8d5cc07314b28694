#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdegnn/dense.hpp"

namespace pdegnn {

/// Oriented edge. The orientation is arbitrary but fixed; it decides the sign
/// of the corresponding row of the gradient operator.
struct Edge {
  Index tail = 0;
  Index head = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Immutable simple graph over nodes 0..n-1 with each undirected edge stored
/// once. Self-loops are rejected; the GCN propagation matrix adds its own.
class Graph {
 public:
  Graph() = default;

  /// Validates ranges, self-loops and duplicate undirected edges; keeps the
  /// given orientation and order. Throws std::invalid_argument.
  Graph(Index n, std::vector<Edge> edges);

  /// Canonicalizes an arbitrary undirected pair list: orientation min -> max,
  /// sorted, duplicates and self-loops dropped with a warning.
  static Graph from_undirected(Index n, std::span<const std::pair<Index, Index>> pairs);

  Index n() const { return n_; }
  Index m() const { return static_cast<Index>(edges_.size()); }
  std::span<const Edge> edges() const { return edges_; }

  /// Node degrees (self-loops excluded).
  std::vector<Index> degrees() const;

  /// Relabels node i as perm[i]. Edge order and orientation are carried over,
  /// so operators built from the result are permutation-conjugated.
  Graph permuted(std::span<const Index> perm) const;

  bool is_connected() const;

 private:
  Index n_ = 0;
  std::vector<Edge> edges_;
};

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

/// Compressed sparse matrix holding both a row index and a transposed row
/// index, so forward and transposed products walk contiguous memory.
class SparseOperator {
 public:
  SparseOperator() = default;

  /// Entries may come in any order; duplicate (row, col) pairs or
  /// out-of-range indices throw std::invalid_argument.
  SparseOperator(Index rows, Index cols, std::vector<Triplet> entries);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }

  /// Entries in row-major sorted order.
  std::vector<Triplet> entries() const;

  MatrixD to_dense() const;

  /// y = op * x. Accumulation order within a row is fixed (ascending column).
  template <typename T>
  Matrix<T> apply(const Matrix<T>& x) const;

  /// y = op^T * x.
  template <typename T>
  Matrix<T> apply_transposed(const Matrix<T>& x) const;

 private:
  template <typename T>
  static Matrix<T> multiply(Index out_rows, const std::vector<Index>& ptr, const std::vector<Index>& idx,
                            const std::vector<double>& val, const Matrix<T>& x);

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;
  std::vector<Index> t_row_ptr_;
  std::vector<Index> t_col_idx_;
  std::vector<double> t_values_;
};

/// Edge-by-node gradient: row e of edge (i -> j) is -1 at i, +1 at j.
/// Its transpose is the graph divergence.
SparseOperator build_gradient(const Graph& g);

/// Edge-by-node averaging: row e of edge (i, j) is 0.5 at i and j.
SparseOperator build_averaging(const Graph& g);

/// Symmetric normalized adjacency with self-loops, D~^-1/2 (A + I) D~^-1/2.
SparseOperator build_gcn_propagation(const Graph& g);

template <typename T>
Matrix<T> spmm(const SparseOperator& op, const Matrix<T>& x) {
  return op.apply(x);
}

template <typename T>
Matrix<T> spmm_transposed(const SparseOperator& op, const Matrix<T>& x) {
  return op.apply_transposed(x);
}

/// The three fixed operators of a graph, built once.
struct GraphOperators {
  explicit GraphOperators(const Graph& g)
      : gradient(build_gradient(g)), averaging(build_averaging(g)), propagation(build_gcn_propagation(g)) {}

  SparseOperator gradient;
  SparseOperator averaging;
  SparseOperator propagation;
};

}  // namespace pdegnn
