#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/trainer.hpp"

using namespace pdegnn;
namespace fs = std::filesystem;

namespace {

const std::string kData = PDEGNN_TEST_DATA_DIR;

constexpr BlockKind kAll[] = {BlockKind::gcn,  BlockKind::advection, BlockKind::burgers, BlockKind::diffusion,
                              BlockKind::wave, BlockKind::mix_ad,    BlockKind::mix_aw};

ModelConfig toy_model(BlockKind kind, int depth) {
  ModelConfig c;
  c.block = kind;
  c.depth = depth;
  c.channels = 16;
  c.dropout = 0.0;
  c.h = 0.1;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("adam leaves parameters alone when gradients vanish") {
    Parameter<double> p{"w", testing::mat({{1.0, -2.0}}), MatrixD::Zero(1, 2), false};
    std::vector<Parameter<double>*> ps{&p};
    AdamState<double> st;
    OptimConfig cfg;
    cfg.weight_decay = 0.1;  // not applied: decay disabled on this parameter
    adam_step<double>(ps, st, cfg);
    CHECK(p.value == testing::mat({{1.0, -2.0}}));
  }

  TEST_CASE("first adam step moves each weight by about lr") {
    Parameter<double> p{"w", testing::mat({{1.0, -2.0}}), testing::mat({{0.3, -5.0}}), true};
    std::vector<Parameter<double>*> ps{&p};
    AdamState<double> st;
    OptimConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    adam_step<double>(ps, st, cfg);
    CHECK(p.value(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(-1.99).epsilon(1e-6));
    CHECK(st.step == 1);
  }

  TEST_CASE("weight decay adds wd * w to the gradient") {
    Parameter<double> p{"w", testing::mat({{2.0}}), testing::mat({{0.0}}), true};
    std::vector<Parameter<double>*> ps{&p};
    AdamState<double> st;
    OptimConfig cfg;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.1;
    adam_step<double>(ps, st, cfg);
    CHECK(p.value(0, 0) == doctest::Approx(1.5).epsilon(1e-6));
  }

  TEST_CASE("accuracy breaks ties toward the lowest class") {
    const MatrixD logits = testing::mat({{1, 1}, {0, 2}, {3, 3}, {5, 0}});
    const std::vector<int> labels{0, 1, 1, 0};
    const std::vector<std::uint8_t> all{1, 1, 1, 1};
    const std::vector<std::uint8_t> first{1, 0, 0, 0};
    CHECK(accuracy<double>(logits, labels, all) == 75.0);
    CHECK(accuracy<double>(logits, labels, first) == 100.0);
  }

  TEST_CASE("zero epochs evaluates the initial model") {
    const auto b = load_bundle(kData + "/toy_separable");
    const auto data = TrainingData<double>::from_bundle(b, true);
    const auto split = full_split(b, 0);
    Model<double> m(toy_model(BlockKind::diffusion, 2), b.graph(), b.f_in, b.classes);
    OptimConfig cfg;
    cfg.max_epochs = 0;
    cfg.patience = 1;
    const auto w0 = m.w_in.value;
    const auto r = train(m, data, split, cfg, 0);
    CHECK(r.epochs_ran == 0);
    CHECK(r.best_epoch == 0);
    CHECK(r.losses.empty());
    CHECK(m.w_in.value == w0);
    CHECK(r.best_val_acc == evaluate(m, data, split.val));
  }

  TEST_CASE("separable toy reaches full training accuracy") {
    const auto b = load_bundle(kData + "/toy_separable");
    const auto data = TrainingData<double>::from_bundle(b, false);
    const auto split = full_split(b, 0);
    Model<double> m(toy_model(BlockKind::mix_ad, 2), b.graph(), b.f_in, b.classes);
    OptimConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    train(m, data, split, cfg, 0);
    CHECK(evaluate(m, data, split.train) == 100.0);
  }

  TEST_CASE("training loss decreases for every block") {
    const auto b = load_bundle(kData + "/toy_citation");
    const auto data = TrainingData<double>::from_bundle(b, true);
    const auto split = semi_split(b, 0);
    for (auto kind : kAll) {
      CAPTURE(to_string(kind));
      Model<double> m(toy_model(kind, 2), b.graph(), b.f_in, b.classes);
      OptimConfig cfg;
      cfg.lr = 0.01;
      cfg.max_epochs = 10;
      cfg.patience = 10;
      const auto r = train(m, data, split, cfg, 0);
      REQUIRE(r.losses.size() == 10);
      CHECK(r.losses.back() < r.losses.front());
    }
  }

  TEST_CASE("training is deterministic for a fixed seed") {
    const auto b = load_bundle(kData + "/toy_citation");
    const auto data = TrainingData<float>::from_bundle(b, true);
    const auto split = semi_split(b, 0);
    auto cfgm = toy_model(BlockKind::mix_aw, 3);
    cfgm.dropout = 0.5;
    OptimConfig cfg;
    cfg.max_epochs = 15;
    cfg.patience = 15;
    Model<float> a(cfgm, b.graph(), b.f_in, b.classes);
    Model<float> c(cfgm, b.graph(), b.f_in, b.classes);
    const auto ra = train(a, data, split, cfg, 4);
    const auto rc = train(c, data, split, cfg, 4);
    CHECK(ra.losses == rc.losses);
    CHECK(a.w_out.value == c.w_out.value);
  }

  TEST_CASE("early stopping restores the best validation epoch") {
    const auto b = load_bundle(kData + "/toy_citation");
    const auto data = TrainingData<double>::from_bundle(b, true);
    const auto split = semi_split(b, 0);
    Model<double> m(toy_model(BlockKind::diffusion, 2), b.graph(), b.f_in, b.classes);
    OptimConfig cfg;
    cfg.lr = 0.01;
    cfg.max_epochs = 300;
    cfg.patience = 5;
    const auto r = train(m, data, split, cfg, 0);
    CHECK(r.epochs_ran <= r.best_epoch + 5);
    CHECK(evaluate(m, data, split.val) == r.best_val_acc);
  }

  TEST_CASE("optimizer config validation") {
    OptimConfig cfg;
    cfg.lr = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.eval_every = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.max_epochs = 10;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  TEST_CASE("results csv has one header and appended rows") {
    const auto path = (fs::temp_directory_path() / "pdegnn_results_test" / "results.csv").string();
    fs::remove_all(fs::path(path).parent_path());
    ResultRow row{"toy", "gcn", 2, 0, 81.0, 79.5, 120, 1.25, "abcd"};
    append_results_csv(path, std::span(&row, 1));
    append_results_csv(path, std::span(&row, 1));
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == kResultsHeader);
    CHECK(lines[1] == "toy,gcn,2,0,81.00,79.50,120,1.250,abcd");
    fs::remove_all(fs::path(path).parent_path());
  }

  TEST_CASE("config hash depends only on content") {
    KeyValues a, b;
    a.set("x", "1");
    a.set("y", "2");
    b.set("y", "2");
    b.set("x", "1");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.set("x", "3");
    CHECK(config_hash(a) != config_hash(b));
  }
}
