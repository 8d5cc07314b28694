#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdegnn/dense.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/rng.hpp"

namespace pdegnn {

/// Trainable tensor owned by a model. Gradients are written by Tape::backward.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool weight_decay = true;
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  /// Gradient after Tape::backward; empty for intermediates and unreachable nodes.
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and backward() is a single reverse sweep. A tape is used for one
/// forward/backward pass and then discarded; operands that ops capture by
/// pointer (sparse operators, labels) must outlive it.
template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;
  using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Mat value);
  /// Free leaf that receives a gradient (tests, input sensitivities).
  Var<T> variable(Mat value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var<T> parameter(Parameter<T>& p);

  Var<T> record(Mat value, std::initializer_list<Var<T>> inputs, BackwardFn fn);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(std::size_t id, const Mat& g);
  void accumulate(std::size_t id, Mat&& g);

  /// Populates grads of every parameter bound to this tape with d loss / d p.
  /// Parameter grads are reset to zero first. Throws std::invalid_argument if
  /// loss is not 1 x 1 or belongs to another tape.
  void backward(Var<T> loss);

  /// Smallest |pre-activation| seen by a ReLU on this tape.
  T relu_margin() const { return relu_margin_; }
  void note_relu_margin(T m) {
    if (m < relu_margin_) relu_margin_ = m;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  T relu_margin_ = std::numeric_limits<T>::infinity();
};

enum class Activation { relu, identity, elu, tanh };

namespace ad {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);
/// Sparse operator is a constant; only x receives a gradient.
template <typename T>
Var<T> spmm(const SparseOperator& op, Var<T> x);
template <typename T>
Var<T> spmm_transposed(const SparseOperator& op, Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);
/// s * a + b elementwise with scalar constants.
template <typename T>
Var<T> affine(Var<T> a, T s, T b);
/// Multiplies every entry of x by the 1 x 1 tensor s.
template <typename T>
Var<T> scale_by(Var<T> s, Var<T> x);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
/// Row e of x multiplied by d(e); d is rows(x) x 1.
template <typename T>
Var<T> row_scale(Var<T> d, Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> elu(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> activate(Var<T> x, Activation act);

/// Inverted dropout; identity (no draws) when !training or p == 0.
template <typename T>
Var<T> dropout(Var<T> x, double p, bool training, Rng& rng);

template <typename T>
Var<T> sum(Var<T> x);

/// Mean cross-entropy of row-softmax(logits) over rows with mask[i] != 0.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const std::uint8_t> mask);

}  // namespace ad

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pdegnn
