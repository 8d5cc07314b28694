#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pdegnn/config.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/log.hpp"

using namespace pdegnn;
namespace fs = std::filesystem;

namespace {

const std::string kData = PDEGNN_TEST_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Scratch copy of a toy bundle that a test may corrupt.
struct ScratchBundle {
  fs::path dir;
  explicit ScratchBundle(const std::string& name) {
    dir = fs::temp_directory_path() / ("pdegnn_scratch_" + name);
    fs::remove_all(dir);
    fs::copy(fs::path(kData) / name, dir);
  }
  ~ScratchBundle() { fs::remove_all(dir); }

  void write(const std::string& file, const std::string& bytes) const {
    std::ofstream(dir / file, std::ios::binary | std::ios::trunc) << bytes;
  }
  /// Re-stamps meta.json so only the structural defect remains.
  void reseal() const {
    std::string payload = slurp(dir / "edges.csv") + slurp(dir / "features.bin") + slurp(dir / "labels.csv");
    if (fs::exists(dir / "masks.csv")) payload += slurp(dir / "masks.csv");
    std::string meta = slurp(dir / "meta.json");
    const auto key = meta.find("\"payload_sha256\": \"") + 19;
    meta.replace(key, 64, sha256_hex(payload));
    write("meta.json", meta);
  }
  std::string path() const { return dir.string(); }
};

BundleErrc error_code(const std::string& dir) {
  try {
    load_bundle(dir);
  } catch (const BundleError& e) {
    return e.code();
  }
  FAIL("bundle loaded without error");
  return BundleErrc::malformed;
}

DatasetBundle tiny(Index per_class, Index classes) {
  DatasetBundle b;
  b.name = "tiny";
  b.classes = classes;
  b.n = per_class * classes;
  b.f_in = 1;
  b.features = MatrixF::Ones(b.n, 1);
  for (Index i = 0; i < b.n; ++i) b.labels.push_back(static_cast<int>(i / per_class));
  return b;
}

void check_disjoint(const SplitSpec& s) {
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i] + s.val[i] + s.test[i] <= 1);
}

}  // namespace

TEST_SUITE("data_io") {
  TEST_CASE("toy bundle loads with the expected counts") {
    const auto b = load_bundle(kData + "/toy_separable");
    CHECK(b.name == "toy_separable");
    CHECK(b.n == 20);
    CHECK(b.m == 21);
    CHECK(b.f_in == 2);
    CHECK(b.classes == 2);
    CHECK_FALSE(b.masks.has_value());
    CHECK(b.graph().is_connected());
    CHECK(b.features(0, 0) > 0.99f);
  }

  TEST_CASE("bundle with precomputed masks") {
    const auto b = load_bundle(kData + "/toy_citation");
    REQUIRE(b.masks.has_value());
    const auto s = semi_split(b, 123);
    CHECK(s.count_train() == 15);
    CHECK(s.count_val() == 45);
    CHECK(s.count_test() == 90);
  }

  TEST_CASE("payload checksum is verified") {
    ScratchBundle s("toy_separable");
    std::string labels = slurp(s.dir / "labels.csv");
    labels[0] = labels[0] == '0' ? '1' : '0';
    s.write("labels.csv", labels);
    CHECK(error_code(s.path()) == BundleErrc::checksum_mismatch);
  }

  TEST_CASE("truncated feature file") {
    ScratchBundle s("toy_separable");
    const std::string f = slurp(s.dir / "features.bin");
    s.write("features.bin", f.substr(0, f.size() - 8));
    CHECK_THROWS_WITH_AS(load_bundle(s.path()), doctest::Contains("feature row count mismatch"), BundleError);
    s.reseal();
    CHECK_THROWS_WITH_AS(load_bundle(s.path()), doctest::Contains("feature row count mismatch"), BundleError);
    s.write("features.bin", f.substr(0, f.size() - 3));
    CHECK_THROWS_WITH_AS(load_bundle(s.path()), doctest::Contains("feature row count mismatch"), BundleError);
  }

  TEST_CASE("label count mismatch") {
    ScratchBundle s("toy_separable");
    s.write("labels.csv", slurp(s.dir / "labels.csv") + "1\n");
    s.reseal();
    CHECK_THROWS_WITH_AS(load_bundle(s.path()), doctest::Contains("label count mismatch"), BundleError);
  }

  TEST_CASE("label out of range") {
    ScratchBundle s("toy_separable");
    std::string labels = slurp(s.dir / "labels.csv");
    labels[0] = '7';
    s.write("labels.csv", labels);
    s.reseal();
    CHECK(error_code(s.path()) == BundleErrc::label_out_of_range);
  }

  TEST_CASE("non-finite feature") {
    ScratchBundle s("toy_separable");
    std::string f = slurp(s.dir / "features.bin");
    const float nan = std::nanf("");
    std::memcpy(f.data() + 4, &nan, 4);
    s.write("features.bin", f);
    s.reseal();
    CHECK(error_code(s.path()) == BundleErrc::non_finite_feature);
  }

  TEST_CASE("missing files") {
    ScratchBundle s("toy_separable");
    fs::remove(s.dir / "edges.csv");
    CHECK(error_code(s.path()) == BundleErrc::missing_file);
    CHECK(error_code((s.dir / "nowhere").string()) == BundleErrc::missing_file);
  }

  TEST_CASE("named benchmark counts are enforced") {
    ScratchBundle s("toy_separable");
    std::string meta = slurp(s.dir / "meta.json");
    meta.replace(meta.find("toy_separable"), 13, "cora");
    s.write("meta.json", meta);
    CHECK(error_code(s.path()) == BundleErrc::benchmark_mismatch);
    const auto cora = benchmark_stats("Cora");
    REQUIRE(cora.has_value());
    CHECK(cora->nodes == 2708);
    CHECK(cora->edges == 5429);
    CHECK(cora->features == 1433);
    CHECK(cora->classes == 7);
    const auto citeseer = benchmark_stats("citeseer");
    REQUIRE(citeseer.has_value());
    CHECK(citeseer->nodes == 3327);
    CHECK(citeseer->edges == 4732);
    CHECK(citeseer->features == 3703);
    CHECK(citeseer->classes == 6);
  }

  TEST_CASE("save then load round trips") {
    auto b = load_bundle(kData + "/toy_citation");
    const auto dir = fs::temp_directory_path() / "pdegnn_roundtrip";
    fs::remove_all(dir);
    save_bundle(b, dir.string());
    const auto back = load_bundle(dir.string());
    CHECK(back.features == b.features);
    CHECK(back.labels == b.labels);
    CHECK(back.edges == b.edges);
    CHECK(back.masks == b.masks);
    fs::remove_all(dir);
  }

  TEST_CASE("row normalization") {
    MatrixF f(2, 3);
    f << 1, 1, 2, 0, 0, 0;
    row_normalize(f);
    CHECK(f(0, 2) == 0.5f);
    CHECK(f.row(1).sum() == 0.0f);
  }

  TEST_CASE("semi split takes twenty per class then 500 and 1000") {
    const auto b = tiny(600, 3);
    const auto s = semi_split(b, 5);
    CHECK(s.count_train() == 60);
    CHECK(s.count_val() == 500);
    CHECK(s.count_test() == 1000);
    std::vector<int> per_class(3, 0);
    for (Index i = 0; i < b.n; ++i) per_class[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)])] += s.train[static_cast<std::size_t>(i)];
    CHECK(per_class == std::vector<int>{20, 20, 20});
    check_disjoint(s);
  }

  TEST_CASE("splits are deterministic per seed and vary across seeds") {
    const auto b = tiny(600, 3);
    CHECK(semi_split(b, 9).train == semi_split(b, 9).train);
    CHECK(full_split(b, 9).test == full_split(b, 9).test);
    std::set<std::vector<std::uint8_t>> distinct;
    for (std::uint64_t seed = 0; seed < 10; ++seed) distinct.insert(semi_split(b, seed).train);
    CHECK(distinct.size() == 10);
  }

  TEST_CASE("semi split rejects small graphs") {
    CHECK_THROWS_AS(semi_split(tiny(10, 2), 0), std::invalid_argument);
    CHECK_THROWS_AS(semi_split(tiny(30, 2), 0), std::invalid_argument);
  }

  TEST_CASE("full split is stratified 60/20/20") {
    const auto s = full_split(tiny(5, 2), 1);
    CHECK(s.count_train() == 6);
    CHECK(s.count_val() == 2);
    CHECK(s.count_test() == 2);
    check_disjoint(s);

    const auto b = tiny(50, 4);
    const auto big = full_split(b, 3);
    CHECK(big.count_train() + big.count_val() + big.count_test() == b.n);
    CHECK(big.count_val() == 40);
    CHECK(big.count_test() == 40);
    check_disjoint(big);
  }

  TEST_CASE("full split falls back when a class is tiny") {
    auto b = tiny(10, 2);
    b.labels[0] = 2;
    b.classes = 3;
    log::Silence quiet;
    const long before = log::warning_count();
    const auto s = full_split(b, 0);
    CHECK(log::warning_count() > before);
    CHECK(s.count_train() + s.count_val() + s.count_test() == b.n);
    check_disjoint(s);
  }

  TEST_CASE("graph generators") {
    CHECK(make_grid_graph(2, 2).m() == 4);
    CHECK(make_grid_graph(3, 4).m() == 17);
    const Graph c = make_cycle(5);
    CHECK(c.m() == 5);
    CHECK(c.edges()[4].tail == 4);
    CHECK(c.edges()[4].head == 0);
    CHECK(c.degrees() == std::vector<Index>(5, 2));
    CHECK_THROWS(make_cycle(2));

    const Index n = 300;
    const double p = 0.05;
    const double mean = p * static_cast<double>(n * (n - 1) / 2);
    const double sd = std::sqrt(mean * (1 - p));
    const Graph g = make_random(n, p, 17);
    CHECK(std::abs(static_cast<double>(g.m()) - mean) < 3 * sd);
    CHECK(make_random(n, p, 17).edges()[10] == g.edges()[10]);
  }
}
