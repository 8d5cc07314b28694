#include "pdegnn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pdegnn/log.hpp"

namespace pdegnn {

namespace fs = std::filesystem;

std::string_view to_string(SplitMode mode) { return mode == SplitMode::semi ? "semi" : "full"; }

SplitMode parse_split_mode(std::string_view name) {
  if (name == "semi") return SplitMode::semi;
  if (name == "full") return SplitMode::full;
  throw std::invalid_argument("unknown split mode '" + std::string(name) + "' (expected semi or full)");
}

std::optional<Preset> dataset_preset(std::string_view dataset, SplitMode mode) {
  std::string key(dataset);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  struct Row {
    const char* name;
    SplitMode mode;
    Preset preset;
  };
  static const Row rows[] = {
      {"cora", SplitMode::semi, {4.6e-5, 1.2e-4, 64, 0.5, 0.6}},
      {"citeseer", SplitMode::semi, {1.0e-5, 8.1e-3, 256, 0.7, 0.3}},
      {"pubmed", SplitMode::semi, {2.4e-5, 1.2e-4, 256, 0.6, 0.7}},
      {"cora", SplitMode::full, {2.3e-5, 1.0e-4, 64, 0.5, 0.2}},
      {"citeseer", SplitMode::full, {2.1e-4, 1.1e-4, 64, 0.6, 0.3}},
      {"pubmed", SplitMode::full, {4.3e-5, 2.6e-4, 64, 0.5, 0.4}},
      {"chameleon", SplitMode::full, {8.0e-4, 9.2e-5, 64, 0.6, 0.5}},
  };
  for (const auto& r : rows) {
    if (key == r.name && mode == r.mode) return r.preset;
  }
  return std::nullopt;
}

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys{
      "activation", "block",    "channels",   "dataset",    "depth",     "dropout",  "eval_every",
      "f64",        "h",        "jobs",       "lr",         "max_epochs", "normalize_features",
      "out",        "patience", "seed",       "split",      "tie_weights", "weight_decay"};
  return keys;
}

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw std::invalid_argument("dataset: no bundle directory given");
  if (depths.empty()) throw std::invalid_argument("depth: list must not be empty");
  if (seeds.empty()) throw std::invalid_argument("seed: list must not be empty");
  for (int d : depths) {
    if (d < 0) throw std::invalid_argument("depth: values must be >= 0");
  }
  if (jobs < 1) throw std::invalid_argument("jobs: must be >= 1");
  ModelConfig probe = model;
  probe.depth = depths.front();
  probe.validate();
  optim.validate();
}

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  kv.set("dataset", dataset);
  kv.set("split", std::string(to_string(split)));
  kv.set("block", std::string(to_string(model.block)));
  kv.set("channels", std::to_string(model.channels));
  kv.set("dropout", format_real(model.dropout));
  kv.set("h", format_real(model.h));
  kv.set("activation", std::string(to_string(model.activation)));
  kv.set("tie_weights", model.tie_weights ? "true" : "false");
  kv.set("lr", format_real(optim.lr));
  kv.set("weight_decay", format_real(optim.weight_decay));
  kv.set("max_epochs", std::to_string(optim.max_epochs));
  kv.set("patience", std::to_string(optim.patience));
  kv.set("eval_every", std::to_string(optim.eval_every));
  kv.set("depth", join(depths));
  kv.set("seed", join(seeds));
  kv.set("out", out);
  kv.set("f64", f64 ? "true" : "false");
  kv.set("normalize_features", normalize_features ? "true" : "false");
  kv.set("jobs", std::to_string(jobs));
  return kv;
}

ExperimentConfig resolve_config(const KeyValues& settings, std::string_view dataset_name) {
  const auto& known = experiment_keys();
  for (const auto& [key, value] : settings.entries()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  if (auto v = settings.get("split")) cfg.split = parse_split_mode(*v);
  if (auto p = dataset_preset(dataset_name, cfg.split)) {
    cfg.optim.lr = p->lr;
    cfg.optim.weight_decay = p->weight_decay;
    cfg.model.channels = p->channels;
    cfg.model.dropout = p->dropout;
    cfg.model.h = p->h;
  }
  if (auto v = settings.get("dataset")) cfg.dataset = *v;
  if (auto v = settings.get("block")) cfg.model.block = parse_block_kind(*v);
  if (auto v = settings.get("channels")) cfg.model.channels = static_cast<int>(parse_int("channels", *v));
  if (auto v = settings.get("dropout")) cfg.model.dropout = parse_double("dropout", *v);
  if (auto v = settings.get("h")) cfg.model.h = parse_double("h", *v);
  if (auto v = settings.get("activation")) cfg.model.activation = parse_activation(*v);
  if (auto v = settings.get("tie_weights")) cfg.model.tie_weights = parse_bool("tie_weights", *v);
  if (auto v = settings.get("lr")) cfg.optim.lr = parse_double("lr", *v);
  if (auto v = settings.get("weight_decay")) cfg.optim.weight_decay = parse_double("weight_decay", *v);
  if (auto v = settings.get("max_epochs")) cfg.optim.max_epochs = static_cast<int>(parse_int("max_epochs", *v));
  if (auto v = settings.get("patience")) cfg.optim.patience = static_cast<int>(parse_int("patience", *v));
  if (auto v = settings.get("eval_every")) cfg.optim.eval_every = static_cast<int>(parse_int("eval_every", *v));
  if (auto v = settings.get("depth")) {
    cfg.depths.clear();
    for (auto d : parse_int_list("depth", *v)) cfg.depths.push_back(static_cast<int>(d));
  }
  if (auto v = settings.get("seed")) {
    cfg.seeds.clear();
    for (auto s : parse_int_list("seed", *v)) {
      if (s < 0) throw std::invalid_argument("seed: values must be >= 0");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (auto v = settings.get("out")) cfg.out = *v;
  if (auto v = settings.get("f64")) cfg.f64 = parse_bool("f64", *v);
  if (auto v = settings.get("normalize_features")) cfg.normalize_features = parse_bool("normalize_features", *v);
  if (auto v = settings.get("jobs")) cfg.jobs = static_cast<int>(parse_int("jobs", *v));
  cfg.model.depth = cfg.depths.empty() ? 1 : cfg.depths.front();
  return cfg;
}

std::string peek_dataset_name(const std::string& bundle_dir) {
  std::ifstream in(fs::path(bundle_dir) / "meta.json");
  if (in) {
    try {
      const auto meta = nlohmann::json::parse(in);
      if (meta.contains("name") && meta["name"].is_string()) return meta["name"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // fall through to the directory name; load_bundle reports the error
    }
  }
  auto p = fs::path(bundle_dir);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

std::string resolve_dataset_path(const std::string& spec) {
  if (spec.empty() || fs::is_directory(spec)) return spec;
  if (const char* root = std::getenv("PDEGNN_DATA"); root != nullptr && *root != '\0') {
    const auto candidate = fs::path(root) / spec;
    if (fs::is_directory(candidate)) return candidate.string();
  }
  return spec;
}

SplitSpec make_split(const DatasetBundle& bundle, SplitMode mode, std::uint64_t seed) {
  return mode == SplitMode::semi ? semi_split(bundle, seed) : full_split(bundle, seed);
}

namespace {

template <typename T>
RunRecord run_typed(const DatasetBundle& bundle, const ExperimentConfig& cfg, int depth, std::uint64_t seed,
                    bool with_profile) {
  RunRecord rec;
  rec.depth = depth;
  rec.seed = seed;
  ModelConfig mc = cfg.model;
  mc.depth = depth;
  mc.seed = seed;
  const auto data = TrainingData<T>::from_bundle(bundle, cfg.normalize_features);
  const auto split = make_split(bundle, cfg.split, seed);
  Model<T> model(mc, bundle.graph(), bundle.f_in, bundle.classes);
  try {
    rec.result = train(model, data, split, cfg.optim, seed);
  } catch (const TrainingDiverged& e) {
    rec.error = e.what();
    rec.result.seed = seed;
    rec.result.epochs_ran = e.epoch();
  }
  if (with_profile && rec.error.empty()) rec.profile = smoothing_profile(model, data.features);
  return rec;
}

}  // namespace

std::string ExperimentConfig::hash() const {
  const KeyValues all = to_key_values();
  KeyValues kept;
  for (const auto& [key, value] : all.entries()) {
    if (key != "out" && key != "jobs") kept.set(key, value);
  }
  return config_hash(kept);
}

RunRecord run_one(const DatasetBundle& bundle, const ExperimentConfig& cfg, int depth, std::uint64_t seed,
                  bool with_profile) {
  RunRecord rec = cfg.f64 ? run_typed<double>(bundle, cfg, depth, seed, with_profile)
                          : run_typed<float>(bundle, cfg, depth, seed, with_profile);
  const auto hash = cfg.hash();
  rec.row = ResultRow{bundle.name,
                      std::string(to_string(cfg.model.block)),
                      depth,
                      seed,
                      rec.result.best_val_acc,
                      rec.result.test_acc_at_best_val,
                      rec.result.epochs_ran,
                      rec.result.wall_seconds,
                      hash};
  return rec;
}

std::vector<RunRecord> run_grid(const DatasetBundle& bundle, const ExperimentConfig& cfg, bool with_profile) {
  cfg.validate();
  std::vector<std::pair<int, std::uint64_t>> work;
  for (int d : cfg.depths)
    for (auto s : cfg.seeds) work.emplace_back(d, s);
  std::sort(work.begin(), work.end());
  work.erase(std::unique(work.begin(), work.end()), work.end());

  std::vector<RunRecord> out(work.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < work.size(); k = next++) {
      try {
        out[k] = run_one(bundle, cfg, work[k].first, work[k].second, with_profile);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), work.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

OutputPaths output_paths(const ExperimentConfig& cfg) {
  const auto hash = cfg.hash();
  const fs::path dir(cfg.out);
  return {(dir / "results.csv").string(), (dir / "smoothing.csv").string(),
          (dir / ("depth_table-" + hash + ".csv")).string(), (dir / ("config-" + hash + ".txt")).string()};
}

namespace {

struct DepthStats {
  double mean = 0;
  double best = 0;
  double stddev = 0;
  int runs = 0;
};

std::map<int, DepthStats> per_depth(const std::vector<RunRecord>& runs) {
  std::map<int, std::vector<double>> acc;
  for (const auto& r : runs) {
    if (r.error.empty()) acc[r.depth].push_back(r.result.test_acc_at_best_val);
  }
  std::map<int, DepthStats> stats;
  for (const auto& [depth, v] : acc) {
    DepthStats s;
    s.runs = static_cast<int>(v.size());
    for (double a : v) s.mean += a;
    s.mean /= static_cast<double>(v.size());
    s.best = *std::max_element(v.begin(), v.end());
    for (double a : v) s.stddev += (a - s.mean) * (a - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(v.size()));
    stats[depth] = s;
  }
  return stats;
}

}  // namespace

OutputPaths write_outputs(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs, bool depth_table) {
  const auto paths = output_paths(cfg);
  fs::create_directories(cfg.out);
  {
    std::ofstream c(paths.config, std::ios::trunc);
    c << cfg.to_key_values().to_text();
  }
  std::vector<ResultRow> rows;
  for (const auto& r : runs) rows.push_back(r.row);
  append_results_csv(paths.results, rows);

  bool any_profile = false;
  for (const auto& r : runs) any_profile = any_profile || r.profile.has_value();
  if (any_profile) {
    const bool fresh = !fs::exists(paths.profiles) || fs::file_size(paths.profiles) == 0;
    std::ofstream p(paths.profiles, std::ios::app);
    if (fresh) p << kProfileHeader << '\n';
    char buf[256];
    for (const auto& r : runs) {
      if (!r.profile) continue;
      for (std::size_t l = 0; l < r.profile->variance.size(); ++l) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%llu,%zu,%.9g,%.9g,%s", r.row.dataset.c_str(), r.row.block.c_str(),
                      r.depth, static_cast<unsigned long long>(r.seed), l, r.profile->variance[l],
                      r.profile->normalized_variance[l], r.row.config_hash.c_str());
        p << buf << '\n';
      }
    }
  }

  if (depth_table && !runs.empty()) {
    const auto stats = per_depth(runs);
    std::ofstream t(paths.table, std::ios::trunc);
    t << "dataset,block,split,statistic";
    for (const auto& [depth, s] : stats) t << ',' << depth;
    t << '\n';
    char buf[64];
    for (const char* stat : {"mean", "best", "std"}) {
      t << runs.front().row.dataset << ',' << runs.front().row.block << ',' << to_string(cfg.split) << ',' << stat;
      for (const auto& [depth, s] : stats) {
        const double v = std::string_view(stat) == "mean" ? s.mean : std::string_view(stat) == "best" ? s.best : s.stddev;
        std::snprintf(buf, sizeof buf, ",%.2f", v);
        t << buf;
      }
      t << '\n';
    }
  }
  return paths;
}

std::string summarize(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs) {
  std::ostringstream s;
  char buf[256];
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      s << r.row.dataset << ' ' << r.row.block << " depth " << r.depth << " seed " << r.seed << ": " << r.error << '\n';
      continue;
    }
    std::snprintf(buf, sizeof buf, "%s %s depth %d seed %llu: val %.2f test %.2f (epoch %d of %d, %.1fs)",
                  r.row.dataset.c_str(), r.row.block.c_str(), r.depth, static_cast<unsigned long long>(r.seed),
                  r.result.best_val_acc, r.result.test_acc_at_best_val, r.result.best_epoch, r.result.epochs_ran,
                  r.result.wall_seconds);
    s << buf << '\n';
  }
  const auto stats = per_depth(runs);
  if (stats.size() > 1 || cfg.seeds.size() > 1) {
    for (const auto& [depth, st] : stats) {
      std::snprintf(buf, sizeof buf, "depth %d: mean test %.2f +- %.2f, best %.2f over %d runs", depth, st.mean,
                    st.stddev, st.best, st.runs);
      s << buf << '\n';
    }
  }
  return s.str();
}

}  // namespace pdegnn
