#pragma once

#include "pdegnn/dense.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/rng.hpp"

namespace testing {

inline pdegnn::MatrixD random_matrix(pdegnn::Rng& rng, pdegnn::Index r, pdegnn::Index c, double lo = -1,
                                     double hi = 1) {
  pdegnn::MatrixD m(r, c);
  for (pdegnn::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

inline pdegnn::MatrixD mat(std::initializer_list<std::initializer_list<double>> rows) {
  pdegnn::MatrixD m(static_cast<pdegnn::Index>(rows.size()), static_cast<pdegnn::Index>(rows.begin()->size()));
  pdegnn::Index i = 0;
  for (const auto& r : rows) {
    pdegnn::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline double max_abs_diff(const pdegnn::MatrixD& a, const pdegnn::MatrixD& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

/// Path 0 - 1 - 2 with edges 0->1, 1->2.
inline pdegnn::Graph path3() { return pdegnn::Graph(3, {{0, 1}, {1, 2}}); }

}  // namespace testing
