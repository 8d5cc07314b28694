#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/log.hpp"

using namespace pdegnn;
using testing::mat;
using testing::max_abs_diff;

TEST_SUITE("graph") {
  TEST_CASE("gradient of the path has one -1/+1 row per edge") {
    const auto G = build_gradient(testing::path3()).to_dense();
    CHECK(max_abs_diff(G, mat({{-1, 1, 0}, {0, -1, 1}})) == 0.0);
  }

  TEST_CASE("averaging of the path") {
    const auto A = build_averaging(testing::path3()).to_dense();
    CHECK(max_abs_diff(A, mat({{0.5, 0.5, 0}, {0, 0.5, 0.5}})) == 0.0);
  }

  TEST_CASE("gradient of a constant is exactly zero") {
    Rng rng(3);
    const Graph g = make_random(40, 0.2, 9);
    const MatrixD ones = MatrixD::Constant(40, 3, 1.7);
    const MatrixD grad = spmm(build_gradient(g), ones);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("averaging preserves constants") {
    const Graph g = make_random(30, 0.2, 4);
    const MatrixD c = MatrixD::Constant(30, 2, 2.5);
    const MatrixD avg = spmm(build_averaging(g), c);
    CHECK((avg.array() == 2.5).all());
  }

  TEST_CASE("cycle C4 gradient is the circulant difference") {
    const auto G = build_gradient(make_cycle(4)).to_dense();
    const MatrixD expect = mat({{-1, 1, 0, 0}, {0, -1, 1, 0}, {0, 0, -1, 1}, {1, 0, 0, -1}});
    CHECK(max_abs_diff(G, expect) == 0.0);
    // G^T G is the graph Laplacian.
    const MatrixD L = G.transpose() * G;
    CHECK(max_abs_diff(L, mat({{2, -1, 0, -1}, {-1, 2, -1, 0}, {0, -1, 2, -1}, {-1, 0, -1, 2}})) == 0.0);
  }

  TEST_CASE("propagation of a single node is [1]") {
    const auto P = build_gcn_propagation(Graph(1, {})).to_dense();
    REQUIRE(P.rows() == 1);
    CHECK(P(0, 0) == 1.0);
  }

  TEST_CASE("propagation of the triangle is all 1/3") {
    const auto P = build_gcn_propagation(Graph(3, {{0, 1}, {1, 2}, {2, 0}})).to_dense();
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) CHECK(P(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }

  TEST_CASE("propagation of the path uses self-loop degrees") {
    const auto P = build_gcn_propagation(testing::path3()).to_dense();
    CHECK(P(0, 0) == doctest::Approx(0.5));
    CHECK(P(1, 1) == doctest::Approx(1.0 / 3));
    CHECK(P(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
    CHECK(P(0, 2) == 0.0);
  }

  TEST_CASE("propagation is symmetric with positive row sums") {
    const auto P = build_gcn_propagation(make_random(60, 0.08, 1)).to_dense();
    CHECK(max_abs_diff(P, P.transpose()) < 1e-12);
    CHECK((P.rowwise().sum().array() > 0).all());
  }

  TEST_CASE("spmm examples") {
    const SparseOperator I(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
    Rng rng(5);
    const MatrixD x = testing::random_matrix(rng, 3, 4);
    CHECK(max_abs_diff(spmm(I, x), x) == 0.0);

    const auto G = build_gradient(testing::path3());
    CHECK(max_abs_diff(spmm(G, mat({{1}, {0}, {0}})), mat({{-1}, {0}})) == 0.0);
    CHECK(max_abs_diff(spmm_transposed(G, mat({{1}, {0}})), mat({{-1}, {1}, {0}})) == 0.0);
  }

  TEST_CASE("divergence sums to zero") {
    Rng rng(8);
    const Graph g = make_random(50, 0.1, 2);
    const MatrixD y = testing::random_matrix(rng, g.m(), 3);
    const MatrixD div = spmm_transposed(build_gradient(g), y);
    CHECK(div.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("random sparse operator matches dense products") {
    Rng rng(13);
    std::vector<Triplet> t;
    for (Index i = 0; i < 50; ++i)
      for (Index j = 0; j < 50; ++j)
        if (rng.bernoulli(0.1)) t.push_back({i, j, rng.uniform(-1, 1)});
    const SparseOperator S(50, 50, t);
    const MatrixD D = S.to_dense();
    const MatrixD x = testing::random_matrix(rng, 50, 5);
    CHECK(max_abs_diff(spmm(S, x), D * x) < 1e-10);
    CHECK(max_abs_diff(spmm_transposed(S, x), D.transpose() * x) < 1e-10);
    const MatrixF xf = x.cast<float>();
    CHECK((spmm(S, xf).cast<double>() - D * x).cwiseAbs().maxCoeff() < 1e-5);
  }

  TEST_CASE("operator shape mismatches throw") {
    const auto G = build_gradient(testing::path3());
    CHECK_THROWS_AS(spmm(G, MatrixD(MatrixD::Zero(2, 1))), std::invalid_argument);
    CHECK_THROWS_AS(spmm_transposed(G, MatrixD(MatrixD::Zero(3, 1))), std::invalid_argument);
    CHECK_THROWS_AS(SparseOperator(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(SparseOperator(2, 2, {{2, 0, 1.0}}), std::invalid_argument);
  }

  TEST_CASE("graph validation") {
    CHECK_THROWS_AS(Graph(2, {{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(2, {{0, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 1}, {1, 0}}), std::invalid_argument);
    CHECK_NOTHROW(Graph(3, {}));
  }

  TEST_CASE("from_undirected canonicalizes, dedups and drops self loops with warnings") {
    log::Silence quiet;
    const long before = log::warning_count();
    const std::vector<std::pair<Index, Index>> pairs{{2, 1}, {1, 2}, {0, 0}, {0, 1}};
    const Graph g = Graph::from_undirected(3, pairs);
    REQUIRE(g.m() == 2);
    CHECK(g.edges()[0].tail == 0);
    CHECK(g.edges()[0].head == 1);
    CHECK(g.edges()[1].tail == 1);
    CHECK(g.edges()[1].head == 2);
    CHECK(log::warning_count() - before >= 2);
  }

  TEST_CASE("isolated node keeps a unit self loop") {
    const auto P = build_gcn_propagation(Graph(3, {{0, 1}})).to_dense();
    CHECK(P(2, 2) == 1.0);
    CHECK(P(2, 0) == 0.0);
  }

  TEST_CASE("degrees and connectivity") {
    const Graph g = testing::path3();
    CHECK(g.degrees() == std::vector<Index>{1, 2, 1});
    CHECK(g.is_connected());
    CHECK_FALSE(Graph(3, {{0, 1}}).is_connected());
  }

  TEST_CASE("relabelling keeps orientation and edge order") {
    const Graph g = testing::path3();
    const std::vector<Index> perm{2, 0, 1};
    const Graph p = g.permuted(perm);
    REQUIRE(p.m() == 2);
    CHECK(p.edges()[0].tail == 2);
    CHECK(p.edges()[0].head == 0);
    CHECK(p.edges()[1].tail == 0);
    CHECK(p.edges()[1].head == 1);
  }
}
