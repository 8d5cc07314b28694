#include "pdegnn/diagnostics.hpp"

#include <cmath>

namespace pdegnn {

namespace {

double mean_node_variance(const MatrixD& u, const std::vector<double>* row_scale) {
  if (u.rows() == 0 || u.cols() == 0) return 0;
  double total = 0;
  for (Index j = 0; j < u.cols(); ++j) {
    double mean = 0;
    for (Index i = 0; i < u.rows(); ++i) {
      mean += u(i, j) * (row_scale ? (*row_scale)[static_cast<std::size_t>(i)] : 1.0);
    }
    mean /= static_cast<double>(u.rows());
    double var = 0;
    for (Index i = 0; i < u.rows(); ++i) {
      const double d = u(i, j) * (row_scale ? (*row_scale)[static_cast<std::size_t>(i)] : 1.0) - mean;
      var += d * d;
    }
    total += var / static_cast<double>(u.rows());
  }
  return total / static_cast<double>(u.cols());
}

}  // namespace

SmoothingProfile smoothing_profile(const std::vector<MatrixD>& layers, const Graph& g) {
  std::vector<double> scale(static_cast<std::size_t>(g.n()), 1.0);
  for (const auto& e : g.edges()) {
    scale[static_cast<std::size_t>(e.tail)] += 1;
    scale[static_cast<std::size_t>(e.head)] += 1;
  }
  for (auto& s : scale) s = 1.0 / std::sqrt(s);

  SmoothingProfile p;
  for (const auto& u : layers) {
    p.variance.push_back(mean_node_variance(u, nullptr));
    p.normalized_variance.push_back(mean_node_variance(u, &scale));
    std::vector<double> sums(static_cast<std::size_t>(u.cols()), 0.0);
    for (Index i = 0; i < u.rows(); ++i)
      for (Index j = 0; j < u.cols(); ++j) sums[static_cast<std::size_t>(j)] += u(i, j);
    p.channel_sums.push_back(std::move(sums));
  }
  return p;
}

template <typename T>
SmoothingProfile smoothing_profile(Model<T>& model, const Matrix<T>& features) {
  Tape<T> tape;
  Rng unused(0);
  std::vector<Var<T>> layers;
  forward(model, tape, tape.constant(features), false, unused, &layers);
  std::vector<MatrixD> values;
  for (auto& v : layers) values.push_back(v.value().template cast<double>());
  return smoothing_profile(values, model.graph());
}

template SmoothingProfile smoothing_profile<float>(Model<float>&, const MatrixF&);
template SmoothingProfile smoothing_profile<double>(Model<double>&, const MatrixD&);

}  // namespace pdegnn
