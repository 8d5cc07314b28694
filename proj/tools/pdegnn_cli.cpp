// pdegnn: train, sweep depths, verify, inspect bundles.
//
// Exit codes: 0 success, 1 run or verification failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/experiment.hpp"
#ifdef PDEGNN_HAS_ORACLE
#include "pdegnn/verification.hpp"
#endif

namespace {

using namespace pdegnn;

constexpr int kUsage = 2;

struct RunFlags {
  std::string config;
  std::string dataset;
  std::string block;
  std::string depth;
  std::string seed;
  std::string split;
  std::string activation;
  std::string out;
  std::optional<int> jobs;
  std::optional<int> channels;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<int> eval_every;
  std::optional<double> dropout;
  std::optional<double> h;
  std::optional<double> lr;
  std::optional<double> weight_decay;
  bool f64 = false;
  std::vector<std::string> sets;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "key=value config file (CLI flags override it)");
  cmd->add_option("--dataset", f.dataset, "bundle directory, or a name under $PDEGNN_DATA");
  cmd->add_option("--block", f.block, "gcn, advection, burgers, diffusion, wave, mix_ad, mix_aw");
  cmd->add_option("--depth", f.depth, "comma-separated layer counts");
  cmd->add_option("--seed", f.seed, "comma-separated seeds");
  cmd->add_option("--jobs", f.jobs, "parallel runs");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--f64", f.f64, "train in double precision");
  cmd->add_option("--split", f.split, "semi or full");
  cmd->add_option("--channels", f.channels);
  cmd->add_option("--dropout", f.dropout);
  cmd->add_option("--h", f.h, "step size");
  cmd->add_option("--lr", f.lr);
  cmd->add_option("--weight-decay", f.weight_decay);
  cmd->add_option("--max-epochs", f.max_epochs);
  cmd->add_option("--patience", f.patience);
  cmd->add_option("--eval-every", f.eval_every);
  cmd->add_option("--activation", f.activation, "relu, identity, elu, tanh");
  cmd->add_option("--set", f.sets, "extra key=value setting (repeatable)");
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

KeyValues overrides(const RunFlags& f) {
  KeyValues kv;
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.set(key, v);
  };
  put("dataset", f.dataset);
  put("block", f.block);
  put("depth", f.depth);
  put("seed", f.seed);
  put("split", f.split);
  put("activation", f.activation);
  put("out", f.out);
  if (f.jobs) kv.set("jobs", std::to_string(*f.jobs));
  if (f.channels) kv.set("channels", std::to_string(*f.channels));
  if (f.max_epochs) kv.set("max_epochs", std::to_string(*f.max_epochs));
  if (f.patience) kv.set("patience", std::to_string(*f.patience));
  if (f.eval_every) kv.set("eval_every", std::to_string(*f.eval_every));
  if (f.dropout) kv.set("dropout", real(*f.dropout));
  if (f.h) kv.set("h", real(*f.h));
  if (f.lr) kv.set("lr", real(*f.lr));
  if (f.weight_decay) kv.set("weight_decay", real(*f.weight_decay));
  if (f.f64) kv.set("f64", "true");
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

int run_experiment(const RunFlags& flags, bool sweep) {
  KeyValues settings;
  try {
    if (!flags.config.empty()) settings = KeyValues::load(flags.config);
    settings.merge(overrides(flags));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (sweep && !settings.contains("depth")) settings.set("depth", "2,4,8,16,32,64");

  const auto given = settings.get("dataset");
  if (!given || given->empty()) {
    std::cerr << "error: no dataset given; pass --dataset <bundle dir> (or dataset= in --config)\n";
    return kUsage;
  }
  const std::string path = resolve_dataset_path(*given);
  if (!std::filesystem::is_directory(path)) {
    const char* root = std::getenv("PDEGNN_DATA");
    std::cerr << "error: --dataset '" << *given << "' is not a bundle directory";
    if (root != nullptr) std::cerr << " (also looked under PDEGNN_DATA=" << root << ")";
    std::cerr << "\n";
    return kUsage;
  }
  settings.set("dataset", path);

  ExperimentConfig cfg;
  try {
    cfg = resolve_config(settings, peek_dataset_name(path));
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  DatasetBundle bundle;
  try {
    bundle = load_bundle(path);
  } catch (const BundleError& e) {
    std::cerr << "error: bundle " << path << ": " << e.what() << "\n";
    return 1;
  }

  std::cout << "# effective config (" << cfg.hash() << ")\n";
  std::cout << cfg.to_key_values().to_text();

  std::vector<RunRecord> runs;
  try {
    runs = run_grid(bundle, cfg, sweep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const auto paths = write_outputs(cfg, runs, sweep);
  std::cout << summarize(cfg, runs);
  std::cout << "results: " << paths.results << "\n";
  if (sweep) std::cout << "depth table: " << paths.table << "\nsmoothing profiles: " << paths.profiles << "\n";

  for (const auto& r : runs) {
    if (!r.error.empty()) return 1;
  }
  return 0;
}

int inspect_bundle(const std::string& dir) {
  try {
    const auto b = load_bundle(dir);
    std::printf("name      %s\n", b.name.c_str());
    std::printf("nodes     %lld\n", static_cast<long long>(b.n));
    std::printf("edges     %lld\n", static_cast<long long>(b.m));
    std::printf("features  %lld\n", static_cast<long long>(b.f_in));
    std::printf("classes   %lld\n", static_cast<long long>(b.classes));
    std::vector<long long> per_class(static_cast<std::size_t>(b.classes), 0);
    for (int y : b.labels) ++per_class[static_cast<std::size_t>(y)];
    std::printf("labels   ");
    for (auto c : per_class) std::printf(" %lld", c);
    std::printf("\n");
    if (b.masks) {
      const auto s = SplitSpec::from_tags(*b.masks, 0);
      std::printf("masks     train %lld, val %lld, test %lld\n", static_cast<long long>(s.count_train()),
                  static_cast<long long>(s.count_val()), static_cast<long long>(s.count_test()));
    } else {
      std::printf("masks     none\n");
    }
    std::printf("connected %s\n", b.graph().is_connected() ? "yes" : "no");
    if (auto stats = benchmark_stats(b.name)) {
      std::printf("benchmark %s: published edge count %lld, bundle has %lld\n", std::string(stats->name).c_str(),
                  static_cast<long long>(stats->edges), static_cast<long long>(b.m));
    }
    std::printf("checksum  ok\n");
    return 0;
  } catch (const BundleError& e) {
    std::fprintf(stderr, "error: %s (%s)\n", e.what(), std::string(to_string(e.code())).c_str());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDE-block graph neural networks"};
  // -h stays free for the step-size flag.
  app.set_help_flag("--help", "print help and exit");
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train one model per (depth, seed)");
  add_run_flags(train, train_flags);

  RunFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep-depth", "train across depths and record smoothing profiles");
  add_run_flags(sweep, sweep_flags);

  auto* verify = app.add_subcommand("verify", "run the oracle and property checks");
  std::string fault;
  std::uint64_t verify_seed = 2024;
  verify->add_option("--inject-fault", fault, "deliberate fault to prove the checks bite")
      ->check(CLI::IsMember({"advection-sign"}));
  verify->add_option("--seed", verify_seed, "seed for the random trials");

  auto* inspect = app.add_subcommand("inspect-bundle", "validate a bundle and print its statistics");
  std::string bundle_dir;
  inspect->add_option("dir", bundle_dir, "bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  if (*train) return run_experiment(train_flags, false);
  if (*sweep) return run_experiment(sweep_flags, true);
  if (*inspect) return inspect_bundle(bundle_dir);
  if (*verify) {
#ifdef PDEGNN_HAS_ORACLE
    oracle::VerifyOptions opt;
    opt.flip_advection_sign = fault == "advection-sign";
    opt.seed = verify_seed;
    bool ok = true;
    for (auto check : {oracle::check_conservation, oracle::check_oracle_equivalence, oracle::check_gradients,
                       oracle::check_reductions, oracle::check_mix_aw_relation, oracle::check_oversmoothing,
                       oracle::check_equivariance}) {
      const auto r = check(opt);
      std::cout << oracle::format_check(r) << std::endl;
      ok = ok && r.passed;
    }
    return ok ? 0 : 1;
#else
    std::cerr << "error: built without the oracle (PDEGNN_BUILD_ORACLE=OFF)\n";
    return kUsage;
#endif
  }
  return kUsage;
}
