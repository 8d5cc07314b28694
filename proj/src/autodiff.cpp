#include "pdegnn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pdegnn {

namespace {

template <typename T>
std::string shape_of(const Matrix<T>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                                shape_of(b.value()));
  }
}

template <typename T>
void require_same_tape(const char* op, Var<T> a, Var<T> b) {
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

}  // namespace

template <typename T>
Var<T> Tape<T>::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Mat value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("tape: input recorded on a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::accumulate(std::size_t id, const Mat& g) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

template <typename T>
void Tape<T>::accumulate(std::size_t id, Mat&& g) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = std::move(g);
  } else {
    node.grad += g;
  }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss recorded on a different tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_of(loss.value()));
  }
  for (auto& node : nodes_) {
    if (node.param != nullptr) node.param->grad = Mat::Zero(node.value.rows(), node.value.cols());
    node.grad.resize(0, 0);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Mat::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.backward) {
      // The callback may append to other nodes' grads but never to nodes_ itself.
      const Mat g = std::move(node.grad);
      node.grad.resize(0, 0);
      node.backward(*this, g);
    } else if (node.param != nullptr) {
      node.param->grad = node.grad;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ad {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_of(a.value()) + " * " + shape_of(b.value()));
  }
  Matrix<T> out;
  out.noalias() = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a.id())) {
      Matrix<T> ga;
      ga.noalias() = g * b.value().transpose();
      t.accumulate(a.id(), std::move(ga));
    }
    if (t.requires_grad(b.id())) {
      Matrix<T> gb;
      gb.noalias() = a.value().transpose() * g;
      t.accumulate(b.id(), std::move(gb));
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Matrix<T> out = a.value().transpose();
  return a.tape()->record(std::move(out), {a}, [a](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a.id(), Matrix<T>(g.transpose()));
  });
}

template <typename T>
Var<T> spmm(const SparseOperator& op, Var<T> x) {
  auto out = op.apply(x.value());
  return x.tape()->record(std::move(out), {x}, [&op, x](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), op.apply_transposed(g));
  });
}

template <typename T>
Var<T> spmm_transposed(const SparseOperator& op, Var<T> x) {
  auto out = op.apply_transposed(x.value());
  return x.tape()->record(std::move(out), {x}, [&op, x](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), op.apply(g));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a, b);
  Matrix<T> out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a.id(), g);
    t.accumulate(b.id(), g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a, b);
  Matrix<T> out = a.value() - b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a.id(), g);
    if (t.requires_grad(b.id())) t.accumulate(b.id(), Matrix<T>(-g));
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Matrix<T> out = s * a.value();
  return a.tape()->record(std::move(out), {a}, [a, s](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a.id(), Matrix<T>(s * g));
  });
}

template <typename T>
Var<T> affine(Var<T> a, T s, T b) {
  Matrix<T> out = (s * a.value().array() + b).matrix();
  return a.tape()->record(std::move(out), {a}, [a, s](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(a.id(), Matrix<T>(s * g));
  });
}

template <typename T>
Var<T> scale_by(Var<T> s, Var<T> x) {
  require_same_tape("scale_by", s, x);
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: factor must be 1x1");
  const T factor = s.value()(0, 0);
  Matrix<T> out = factor * x.value();
  return x.tape()->record(std::move(out), {s, x}, [s, x, factor](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(s.id())) {
      Matrix<T> gs(1, 1);
      gs(0, 0) = g.cwiseProduct(x.value()).sum();
      t.accumulate(s.id(), std::move(gs));
    }
    if (t.requires_grad(x.id())) t.accumulate(x.id(), Matrix<T>(factor * g));
  });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  require_same_tape("hadamard", a, b);
  require_same_shape("hadamard", a, b);
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(a.id())) t.accumulate(a.id(), Matrix<T>(g.cwiseProduct(b.value())));
    if (t.requires_grad(b.id())) t.accumulate(b.id(), Matrix<T>(g.cwiseProduct(a.value())));
  });
}

template <typename T>
Var<T> row_scale(Var<T> d, Var<T> x) {
  require_same_tape("row_scale", d, x);
  if (d.cols() != 1 || d.rows() != x.rows()) {
    throw std::invalid_argument("row_scale: weights " + shape_of(d.value()) + " do not match rows of " +
                                shape_of(x.value()));
  }
  Matrix<T> out = d.value().col(0).asDiagonal() * x.value();
  return x.tape()->record(std::move(out), {d, x}, [d, x](Tape<T>& t, const Matrix<T>& g) {
    if (t.requires_grad(d.id())) {
      Matrix<T> gd = g.cwiseProduct(x.value()).rowwise().sum();
      t.accumulate(d.id(), std::move(gd));
    }
    if (t.requires_grad(x.id())) t.accumulate(x.id(), Matrix<T>(d.value().col(0).asDiagonal() * g));
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  const auto& v = x.value();
  if (v.size() > 0) x.tape()->note_relu_margin(v.cwiseAbs().minCoeff());
  Matrix<T> out = v.cwiseMax(T(0));
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> gx = (x.value().array() > T(0)).select(g, T(0));
    t.accumulate(x.id(), std::move(gx));
  });
}

template <typename T>
Var<T> elu(Var<T> x) {
  Matrix<T> out = x.value().unaryExpr([](T v) { return v > T(0) ? v : std::expm1(v); });
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> slope = x.value().unaryExpr([](T v) { return v > T(0) ? T(1) : std::exp(v); });
    t.accumulate(x.id(), Matrix<T>(g.cwiseProduct(slope)));
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  Matrix<T> out = x.value().array().tanh().matrix();
  Matrix<T> slope = (T(1) - out.array().square()).matrix();
  return x.tape()->record(std::move(out), {x}, [x, slope = std::move(slope)](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), Matrix<T>(g.cwiseProduct(slope)));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Matrix<T> out = x.value().unaryExpr([](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  Matrix<T> slope = out.cwiseProduct((T(1) - out.array()).matrix());
  return x.tape()->record(std::move(out), {x}, [x, slope = std::move(slope)](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), Matrix<T>(g.cwiseProduct(slope)));
  });
}

template <typename T>
Var<T> activate(Var<T> x, Activation act) {
  switch (act) {
    case Activation::relu:
      return relu(x);
    case Activation::elu:
      return elu(x);
    case Activation::tanh:
      return tanh(x);
    case Activation::identity:
      break;
  }
  return x;
}

template <typename T>
Var<T> dropout(Var<T> x, double p, bool training, Rng& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: probability must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Matrix<T> mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? T(0) : keep_scale;
  Matrix<T> out = x.value().cwiseProduct(mask);
  return x.tape()->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), Matrix<T>(g.cwiseProduct(mask)));
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [x](Tape<T>& t, const Matrix<T>& g) {
    t.accumulate(x.id(), Matrix<T>(Matrix<T>::Constant(x.rows(), x.cols(), g(0, 0))));
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const std::uint8_t> mask) {
  const auto& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows() || static_cast<Index>(mask.size()) != z.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: labels/mask length must equal logit rows");
  }
  std::vector<Index> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    if (labels[i] < 0 || labels[i] >= z.cols()) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    rows.push_back(static_cast<Index>(i));
  }
  if (rows.empty()) throw std::invalid_argument("softmax_cross_entropy: empty mask");

  // Probabilities of masked rows, reused by the backward rule.
  Matrix<T> prob(static_cast<Index>(rows.size()), z.cols());
  std::vector<int> target(rows.size());
  T total = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k];
    const T shift = z.row(r).maxCoeff();
    auto e = (z.row(r).array() - shift).exp();
    const T denom = e.sum();
    prob.row(static_cast<Index>(k)) = e / denom;
    target[k] = labels[static_cast<std::size_t>(r)];
    total += std::log(denom) - (z(r, target[k]) - shift);
  }
  const T inv_count = T(1) / static_cast<T>(rows.size());
  Matrix<T> out(1, 1);
  out(0, 0) = total * inv_count;
  return logits.tape()->record(
      std::move(out), {logits},
      [logits, rows = std::move(rows), target = std::move(target), prob = std::move(prob), inv_count](
          Tape<T>& t, const Matrix<T>& g) {
        Matrix<T> gz = Matrix<T>::Zero(logits.rows(), logits.cols());
        const T s = g(0, 0) * inv_count;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          auto row = gz.row(rows[k]);
          row = s * prob.row(static_cast<Index>(k));
          row(target[k]) -= s;
        }
        t.accumulate(logits.id(), std::move(gz));
      });
}

#define PDEGNN_INSTANTIATE_AD(T)                                                                  \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                      \
  template Var<T> transpose<T>(Var<T>);                                                           \
  template Var<T> spmm<T>(const SparseOperator&, Var<T>);                                         \
  template Var<T> spmm_transposed<T>(const SparseOperator&, Var<T>);                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                                         \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                         \
  template Var<T> scale<T>(Var<T>, T);                                                            \
  template Var<T> affine<T>(Var<T>, T, T);                                                        \
  template Var<T> scale_by<T>(Var<T>, Var<T>);                                                    \
  template Var<T> hadamard<T>(Var<T>, Var<T>);                                                    \
  template Var<T> row_scale<T>(Var<T>, Var<T>);                                                   \
  template Var<T> relu<T>(Var<T>);                                                                \
  template Var<T> elu<T>(Var<T>);                                                                 \
  template Var<T> tanh<T>(Var<T>);                                                                \
  template Var<T> sigmoid<T>(Var<T>);                                                             \
  template Var<T> activate<T>(Var<T>, Activation);                                                \
  template Var<T> dropout<T>(Var<T>, double, bool, Rng&);                                         \
  template Var<T> sum<T>(Var<T>);                                                                 \
  template Var<T> softmax_cross_entropy<T>(Var<T>, std::span<const int>, std::span<const std::uint8_t>);

PDEGNN_INSTANTIATE_AD(float)
PDEGNN_INSTANTIATE_AD(double)

#undef PDEGNN_INSTANTIATE_AD

}  // namespace ad
}  // namespace pdegnn
