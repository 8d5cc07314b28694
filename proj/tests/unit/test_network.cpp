#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/network.hpp"

using namespace pdegnn;

namespace {

ModelConfig small(BlockKind kind, int depth) {
  ModelConfig c;
  c.block = kind;
  c.depth = depth;
  c.channels = 6;
  c.dropout = 0.5;
  c.h = 0.2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("glorot bound") {
    CHECK(glorot_bound(1433, 64) == doctest::Approx(std::sqrt(6.0 / 1497)));
    CHECK(glorot_bound(1433, 64) == doctest::Approx(0.0633).epsilon(1e-3));
  }

  TEST_CASE("initial weights stay inside the glorot bound") {
    const Graph g = make_cycle(10);
    Model<double> m(small(BlockKind::diffusion, 3), g, 7, 4);
    CHECK(m.w_in.value.cwiseAbs().maxCoeff() <= glorot_bound(7, 6));
    CHECK(m.w_out.value.cwiseAbs().maxCoeff() <= glorot_bound(6, 4));
    CHECK(m.kernels.size() == 3);
    CHECK_FALSE(m.mix.has_value());
  }

  TEST_CASE("tied weights share one kernel") {
    auto cfg = small(BlockKind::advection, 5);
    cfg.tie_weights = true;
    Model<double> m(cfg, make_cycle(8), 3, 2);
    CHECK(m.kernels.size() == 1);
    CHECK(&m.kernel(4) == &m.kernel(0));
  }

  TEST_CASE("mixing models start at alpha 1/2 with one raw per edge") {
    const Graph g = make_cycle(9);
    Model<double> m(small(BlockKind::mix_aw, 2), g, 3, 2);
    REQUIRE(m.mix.has_value());
    CHECK(m.mix->alpha_raw.value(0, 0) == 0.0);
    CHECK(m.mix->d_diff_raw.value.rows() == 9);
    CHECK(m.mix->d_wave_raw.value.rows() == 9);
    CHECK_FALSE(m.mix->alpha_raw.weight_decay);
  }

  TEST_CASE("depth zero is a plain two-layer perceptron") {
    Model<double> m(small(BlockKind::gcn, 0), make_cycle(5), 3, 2);
    CHECK(m.kernels.empty());
    Rng rng(1);
    const MatrixD x = testing::random_matrix(rng, 5, 3);
    const MatrixD relu = (x * m.w_in.value).cwiseMax(0.0);
    CHECK(testing::max_abs_diff(predict(m, x), relu * m.w_out.value) < 1e-14);
  }

  TEST_CASE("eval forward is deterministic and ignores dropout") {
    Model<double> m(small(BlockKind::mix_ad, 3), make_random(20, 0.2, 1), 4, 3);
    Rng data(7);
    const MatrixD x = testing::random_matrix(data, 20, 4);
    Rng r1(1), r2(99);
    Tape<double> t1, t2;
    const MatrixD a = forward(m, t1, t1.constant(x), false, r1).value();
    const MatrixD b = forward(m, t2, t2.constant(x), false, r2).value();
    CHECK(a == b);
    CHECK(a == predict(m, x));
  }

  TEST_CASE("layers hook returns depth + 1 states") {
    Model<double> m(small(BlockKind::wave, 4), make_cycle(7), 2, 2);
    Rng rng(0);
    Tape<double> t;
    std::vector<Var<double>> layers;
    forward(m, t, t.constant(MatrixD::Ones(7, 2)), false, rng, &layers);
    CHECK(layers.size() == 5);
  }

  TEST_CASE("l2 penalty is half the sum of squares") {
    ModelConfig cfg = small(BlockKind::gcn, 1);
    cfg.channels = 1;
    Model<double> m(cfg, Graph(1, {}), 1, 1);
    m.w_in.value(0, 0) = 3.0;
    m.w_out.value(0, 0) = 4.0;
    m.kernels[0].value(0, 0) = 0.0;
    Tape<double> t;
    CHECK(l2_penalty(m, t).value()(0, 0) == 12.5);
  }

  TEST_CASE("same seed, same model; different seed, different model") {
    const Graph g = make_cycle(6);
    Model<double> a(small(BlockKind::burgers, 2), g, 3, 2);
    Model<double> b(small(BlockKind::burgers, 2), g, 3, 2);
    auto cfg = small(BlockKind::burgers, 2);
    cfg.seed = 4;
    Model<double> c(cfg, g, 3, 2);
    CHECK(a.w_in.value == b.w_in.value);
    CHECK(a.kernels[1].value == b.kernels[1].value);
    CHECK(a.w_in.value != c.w_in.value);
  }

  TEST_CASE("checkpoint round trip") {
    const Graph g = make_cycle(6);
    Model<float> a(small(BlockKind::mix_ad, 2), g, 3, 2);
    a.mix->alpha_raw.value(0, 0) = 0.25f;
    const auto path = (std::filesystem::temp_directory_path() / "pdegnn_ckpt_test.bin").string();
    KeyValues extra;
    extra.set("note", "unit");
    save_checkpoint(a, path, extra);
    const auto ck = read_checkpoint(path);
    CHECK(ck.config.get("note") == std::optional<std::string>("unit"));
    CHECK(ck.config.get("block") == std::optional<std::string>("mix_ad"));

    auto cfg = small(BlockKind::mix_ad, 2);
    cfg.seed = 77;
    Model<float> b(cfg, g, 3, 2);
    load_checkpoint(b, ck);
    CHECK(b.w_in.value == a.w_in.value);
    CHECK(b.kernels[1].value == a.kernels[1].value);
    CHECK(b.mix->alpha_raw.value(0, 0) == 0.25f);

    Model<float> wrong(small(BlockKind::mix_ad, 3), g, 3, 2);
    CHECK_THROWS(load_checkpoint(wrong, ck));
    std::filesystem::remove(path);
  }

  TEST_CASE("config validation names the field") {
    auto cfg = small(BlockKind::gcn, 2);
    cfg.channels = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("channels"), std::invalid_argument);
    cfg = small(BlockKind::gcn, 2);
    cfg.dropout = 1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("dropout"), std::invalid_argument);
  }

  TEST_CASE("model config key values round trip") {
    auto cfg = small(BlockKind::wave, 7);
    cfg.activation = Activation::elu;
    cfg.tie_weights = true;
    const auto back = ModelConfig::from_key_values(cfg.to_key_values());
    CHECK(back.block == BlockKind::wave);
    CHECK(back.depth == 7);
    CHECK(back.activation == Activation::elu);
    CHECK(back.tie_weights);
    CHECK(back.h == cfg.h);
  }
}
