// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance properties   criteria 1-7 (synthetic graphs, always runnable)
//   acceptance benchmarks   criteria 8-11 (needs cora/citeseer bundles under
//                           $PDEGNN_DATA; exits 77 when they are absent)

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdegnn/experiment.hpp"
#include "pdegnn/verification.hpp"

namespace {

using namespace pdegnn;

constexpr int kSkip = 77;

void line(int criterion, bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", criterion, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

int properties() {
  const oracle::VerifyOptions opt;
  struct Item {
    int id;
    oracle::CheckResult (*check)(const oracle::VerifyOptions&);
  };
  const Item items[] = {{1, oracle::check_conservation},  {2, oracle::check_oracle_equivalence},
                        {3, oracle::check_gradients},     {4, oracle::check_reductions},
                        {5, oracle::check_mix_aw_relation}, {6, oracle::check_oversmoothing},
                        {7, oracle::check_equivariance}};
  int failed = 0;
  for (const auto& item : items) {
    auto r = item.check(opt);
    // The conservation sweep also carries a one-minute budget on one core.
    if (item.id == 1 && r.seconds >= 60.0) {
      r.passed = false;
      r.detail += "; over the 60 s budget";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, " [%.2fs]", r.seconds);
    line(item.id, r.passed, r.name, r.detail + timing);
    failed += !r.passed;
  }
  return failed == 0 ? 0 : 1;
}

std::optional<std::string> bundle_dir(const char* name) {
  const char* root = std::getenv("PDEGNN_DATA");
  if (root == nullptr || *root == '\0') return std::nullopt;
  const auto dir = std::filesystem::path(root) / name;
  if (!std::filesystem::exists(dir / "meta.json")) return std::nullopt;
  return dir.string();
}

// Best test accuracy over seeds 0-4 with the tuned semi-supervised preset.
double best_of_five(const DatasetBundle& bundle, BlockKind block, int depth, double* seconds) {
  KeyValues kv;
  kv.set("dataset", "unused");
  kv.set("split", "semi");
  kv.set("block", std::string(to_string(block)));
  kv.set("depth", std::to_string(depth));
  kv.set("seed", "0,1,2,3,4");
  const auto cfg = resolve_config(kv, bundle.name);
  double best = 0;
  *seconds = 0;
  for (const auto& r : run_grid(bundle, cfg, false)) {
    if (r.error.empty()) best = std::max(best, r.result.test_acc_at_best_val);
    *seconds += r.result.wall_seconds;
  }
  return best;
}

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

int benchmarks() {
  const auto cora_dir = bundle_dir("cora");
  const auto citeseer_dir = bundle_dir("citeseer");
  if (!cora_dir) {
    for (int id : {8, 9, 10}) std::printf("SKIP [%d] needs a cora bundle under $PDEGNN_DATA\n", id);
  }
  if (!citeseer_dir) std::printf("SKIP [11] needs a citeseer bundle under $PDEGNN_DATA\n");
  if (!cora_dir && !citeseer_dir) return kSkip;

  int failed = 0;
  if (cora_dir) {
    const auto cora = load_bundle(*cora_dir);
    double t2 = 0, t64 = 0, g2 = 0, g64 = 0;
    const double mix2 = best_of_five(cora, BlockKind::mix_ad, 2, &t2);
    line(8, mix2 >= 74.2, "cora semi mix_ad depth 2", fmt("best test %.2f (need >= 74.2) [%.0fs]", mix2, t2));
    failed += !(mix2 >= 74.2);

    const double mix64 = best_of_five(cora, BlockKind::mix_ad, 64, &t64);
    const bool ok9 = mix64 >= 77.1 && mix64 >= mix2 - 1.0;
    line(9, ok9, "cora semi mix_ad depth 64",
         fmt("best test %.2f (need >= 77.1 and >= %.2f) [%.0fs]", mix64, mix2 - 1.0, t64));
    failed += !ok9;

    const double gcn2 = best_of_five(cora, BlockKind::gcn, 2, &g2);
    const double gcn64 = best_of_five(cora, BlockKind::gcn, 64, &g64);
    const bool ok10 = gcn2 >= 78.0 && gcn64 <= 55.0;
    line(10, ok10, "cora semi gcn collapse",
         fmt("depth 2 best %.2f (need >= 78), depth 64 best %.2f (need <= 55) [%.0fs]", gcn2, gcn64, g2 + g64));
    failed += !ok10;
  }
  if (citeseer_dir) {
    const auto citeseer = load_bundle(*citeseer_dir);
    double t = 0;
    const double adv64 = best_of_five(citeseer, BlockKind::advection, 64, &t);
    line(11, adv64 >= 72.5, "citeseer semi advection depth 64",
         fmt("best test %.2f (need >= 72.5) [%.0fs]", adv64, t));
    failed += !(adv64 >= 72.5);
  }
  if (failed) return 1;
  return cora_dir && citeseer_dir ? 0 : kSkip;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "properties";
  if (mode == "properties") return properties();
  if (mode == "benchmarks") return benchmarks();
  std::fprintf(stderr, "usage: acceptance [properties|benchmarks]\n");
  return 2;
}
