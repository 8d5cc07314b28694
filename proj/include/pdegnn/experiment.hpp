#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pdegnn/config.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/diagnostics.hpp"
#include "pdegnn/network.hpp"
#include "pdegnn/trainer.hpp"

namespace pdegnn {

enum class SplitMode { semi, full };

std::string_view to_string(SplitMode mode);
SplitMode parse_split_mode(std::string_view name);

/// Tuned hyperparameters for a benchmark and protocol.
struct Preset {
  double lr;
  double weight_decay;
  int channels;
  double dropout;
  double h;
};

/// Known for cora/citeseer/pubmed (semi and full) and chameleon (full).
std::optional<Preset> dataset_preset(std::string_view dataset, SplitMode mode);

struct ExperimentConfig {
  std::string dataset;  ///< bundle directory
  SplitMode split = SplitMode::semi;
  ModelConfig model;  ///< depth and seed are overwritten per run
  OptimConfig optim;
  std::vector<int> depths{2};
  std::vector<std::uint64_t> seeds{0};
  std::string out = "results";
  bool f64 = false;
  bool normalize_features = true;
  int jobs = 1;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
  /// Canonical echo; every key accepted by resolve_config appears.
  KeyValues to_key_values() const;
  /// Hash of the settings that can change results (out and jobs excluded).
  std::string hash() const;
};

/// Config keys understood by resolve_config.
const std::vector<std::string>& experiment_keys();

/// Defaults, then the preset for (`dataset_name`, split), then `settings`.
/// `settings` already merges a config file with command-line overrides, so
/// the effective precedence is CLI > file > preset > default. Unknown keys
/// throw std::invalid_argument.
ExperimentConfig resolve_config(const KeyValues& settings, std::string_view dataset_name);

/// Dataset name used for preset lookup: meta.json "name" when readable,
/// otherwise the directory's last component.
std::string peek_dataset_name(const std::string& bundle_dir);

/// `spec` as given when it names an existing directory, else
/// $PDEGNN_DATA/spec when that exists, else `spec` unchanged.
std::string resolve_dataset_path(const std::string& spec);

SplitSpec make_split(const DatasetBundle& bundle, SplitMode mode, std::uint64_t seed);

struct RunRecord {
  int depth = 0;
  std::uint64_t seed = 0;
  RunResult result;
  ResultRow row;
  std::optional<SmoothingProfile> profile;
  std::string error;  ///< set when the run diverged
};

/// One training run. The model is initialized from `seed`; dropout uses a
/// stream derived from the same seed.
RunRecord run_one(const DatasetBundle& bundle, const ExperimentConfig& cfg, int depth, std::uint64_t seed,
                  bool with_profile);

/// Every (depth, seed) pair on up to cfg.jobs threads, sorted by (depth, seed).
std::vector<RunRecord> run_grid(const DatasetBundle& bundle, const ExperimentConfig& cfg, bool with_profile);

/// Files written into cfg.out.
struct OutputPaths {
  std::string results;    ///< results.csv, appended
  std::string profiles;   ///< smoothing.csv, appended
  std::string table;      ///< depth_table.csv, appended
  std::string config;     ///< config-<hash>.txt
};

OutputPaths output_paths(const ExperimentConfig& cfg);

inline constexpr char kProfileHeader[] =
    "dataset,block,depth,seed,layer,variance,normalized_variance,config_hash";

/// Appends per-run rows, the per-layer profiles (when present) and one
/// depth-table line per block; writes the config echo. Returns the paths.
OutputPaths write_outputs(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs, bool depth_table);

/// Human-readable summary: one line per run plus mean/best per depth.
std::string summarize(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs);

}  // namespace pdegnn
