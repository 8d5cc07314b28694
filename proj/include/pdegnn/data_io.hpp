#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pdegnn/dense.hpp"
#include "pdegnn/graph.hpp"

namespace pdegnn {

enum class SplitTag : std::uint8_t { none = 0, train, val, test };

/// A node-classification dataset in memory.
struct DatasetBundle {
  std::string name;
  Index n = 0;
  Index m = 0;
  Index f_in = 0;
  Index classes = 0;
  MatrixF features;  ///< n x f_in, raw
  std::vector<int> labels;
  std::vector<std::pair<Index, Index>> edges;  ///< tail < head, sorted
  std::optional<std::vector<SplitTag>> masks;

  Graph graph() const;
};

enum class BundleErrc {
  missing_file,
  malformed,
  count_mismatch,
  non_finite_feature,
  label_out_of_range,
  checksum_mismatch,
  benchmark_mismatch,
};

std::string_view to_string(BundleErrc code);

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  BundleErrc code() const { return code_; }

 private:
  BundleErrc code_;
};

/// Node, feature and class counts of the named citation benchmarks.
struct BenchmarkStats {
  std::string_view name;
  Index classes;
  Index nodes;
  Index edges;  ///< as published; community copies differ after deduplication
  Index features;
};

/// Looks up cora, citeseer, pubmed, chameleon (case-insensitive).
std::optional<BenchmarkStats> benchmark_stats(std::string_view name);

/// Bundle directory layout:
///   meta.json     {"name","n","m","f_in","classes","feature_dtype":"f32",
///                  "has_masks","payload_sha256"}
///   edges.csv     "tail,head" per line, 0-based, tail < head, sorted
///   features.bin  little-endian f32, row-major, n * f_in values
///   labels.csv    one integer per line, n lines
///   masks.csv     optional, "train|val|test|none" per line, n lines
/// payload_sha256 is the SHA-256 of the concatenated bytes of edges.csv,
/// features.bin, labels.csv and (when present) masks.csv, in that order.
///
/// Throws BundleError. For named benchmarks n, f_in and classes must match
/// the published statistics exactly.
DatasetBundle load_bundle(const std::string& dir);
void save_bundle(const DatasetBundle& bundle, const std::string& dir);

/// Row-normalizes features in place (rows summing to zero are left as is).
void row_normalize(MatrixF& features);

struct SplitSpec {
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> val;
  std::vector<std::uint8_t> test;
  std::uint64_t seed = 0;

  static SplitSpec from_tags(const std::vector<SplitTag>& tags, std::uint64_t seed);
  Index count_train() const;
  Index count_val() const;
  Index count_test() const;
};

struct SemiSplitSizes {
  Index per_class = 20;
  Index val = 500;
  Index test = 1000;
};

/// `per_class` training nodes per class, then val/test drawn from the rest.
/// Precomputed masks in the bundle take precedence. Throws
/// std::invalid_argument when a class or the whole graph is too small.
SplitSpec semi_split(const DatasetBundle& bundle, std::uint64_t seed, SemiSplitSizes sizes = {});

/// Stratified 60/20/20 split: per class floor(0.2 n_c) each for val and test,
/// the remainder to train. Falls back to an unstratified split (with a
/// warning) when a class has fewer than 3 members.
SplitSpec full_split(const DatasetBundle& bundle, std::uint64_t seed);

/// rows x cols lattice, nodes numbered row-major, 4-neighbour edges.
Graph make_grid_graph(Index rows, Index cols);
/// Cycle 0-1-...-(n-1)-0 with edges oriented i -> i+1 and (n-1) -> 0; n >= 3.
Graph make_cycle(Index n);
/// Erdos-Renyi G(n, p), canonical orientation.
Graph make_random(Index n, double p, std::uint64_t seed);

}  // namespace pdegnn
