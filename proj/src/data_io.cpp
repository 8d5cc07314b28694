#include "pdegnn/data_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pdegnn/config.hpp"
#include "pdegnn/log.hpp"
#include "pdegnn/rng.hpp"

namespace pdegnn {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "features.bin IO assumes a little-endian host");

std::string_view to_string(BundleErrc code) {
  switch (code) {
    case BundleErrc::missing_file: return "missing_file";
    case BundleErrc::malformed: return "malformed";
    case BundleErrc::count_mismatch: return "count_mismatch";
    case BundleErrc::non_finite_feature: return "non_finite_feature";
    case BundleErrc::label_out_of_range: return "label_out_of_range";
    case BundleErrc::checksum_mismatch: return "checksum_mismatch";
    case BundleErrc::benchmark_mismatch: return "benchmark_mismatch";
  }
  return "?";
}

Graph DatasetBundle::graph() const {
  std::vector<Edge> e;
  e.reserve(edges.size());
  for (auto [a, b] : edges) e.push_back({a, b});
  return Graph(n, std::move(e));
}

namespace {

constexpr std::array<BenchmarkStats, 4> kBenchmarks{{
    {"cora", 7, 2708, 5429, 1433},
    {"citeseer", 6, 3327, 4732, 3703},
    {"pubmed", 3, 19717, 44338, 500},
    {"chameleon", 5, 2277, 36101, 2325},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError(BundleErrc::missing_file, "missing bundle file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    auto eol = text.find('\n');
    auto line = text.substr(0, eol);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (eol == std::string_view::npos) break;
    text.remove_prefix(eol + 1);
  }
  return out;
}

Index to_index(std::string_view s, const std::string& where) {
  try {
    return parse_int(where, s);
  } catch (const std::invalid_argument& e) {
    throw BundleError(BundleErrc::malformed, e.what());
  }
}

const char* tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::none: break;
  }
  return "none";
}

}  // namespace

std::optional<BenchmarkStats> benchmark_stats(std::string_view name) {
  const auto key = lower(name);
  for (const auto& b : kBenchmarks) {
    if (key == b.name) return b;
  }
  return std::nullopt;
}

DatasetBundle load_bundle(const std::string& dir_str) {
  const fs::path dir(dir_str);
  if (!fs::is_directory(dir)) throw BundleError(BundleErrc::missing_file, "bundle directory not found: " + dir_str);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(BundleErrc::malformed, std::string("meta.json: ") + e.what());
  }

  DatasetBundle b;
  bool has_masks = false;
  std::string expected_sha;
  try {
    b.name = meta.at("name").get<std::string>();
    b.n = meta.at("n").get<Index>();
    b.m = meta.at("m").get<Index>();
    b.f_in = meta.at("f_in").get<Index>();
    b.classes = meta.at("classes").get<Index>();
    has_masks = meta.at("has_masks").get<bool>();
    expected_sha = meta.at("payload_sha256").get<std::string>();
    if (meta.at("feature_dtype").get<std::string>() != "f32") {
      throw BundleError(BundleErrc::malformed, "meta.json: feature_dtype must be f32");
    }
  } catch (const nlohmann::json::exception& e) {
    throw BundleError(BundleErrc::malformed, std::string("meta.json: ") + e.what());
  }
  if (b.n < 0 || b.m < 0 || b.f_in <= 0 || b.classes <= 0) {
    throw BundleError(BundleErrc::malformed, "meta.json: counts must be positive");
  }

  const auto edges_raw = read_file(dir / "edges.csv");
  const auto features_raw = read_file(dir / "features.bin");
  const auto labels_raw = read_file(dir / "labels.csv");
  std::string masks_raw;
  if (has_masks) masks_raw = read_file(dir / "masks.csv");

  // features
  const auto row_bytes = static_cast<std::size_t>(b.f_in) * sizeof(float);
  if (features_raw.size() % row_bytes != 0) {
    throw BundleError(BundleErrc::count_mismatch, "feature row count mismatch: file size " +
                                                      std::to_string(features_raw.size()) + " is not a multiple of the row size " + std::to_string(row_bytes));
  }
  if (const auto rows = static_cast<Index>(features_raw.size() / row_bytes); rows != b.n) {
    throw BundleError(BundleErrc::count_mismatch, "feature row count mismatch: expected " + std::to_string(b.n) +
                                                      ", found " + std::to_string(rows));
  }
  b.features.resize(b.n, b.f_in);
  if (!features_raw.empty()) std::memcpy(b.features.data(), features_raw.data(), features_raw.size());
  if (!b.features.allFinite()) {
    for (Index i = 0; i < b.features.size(); ++i) {
      if (!std::isfinite(b.features.data()[i])) {
        throw BundleError(BundleErrc::non_finite_feature, "non-finite feature at node " + std::to_string(i / b.f_in) +
                                                              ", column " + std::to_string(i % b.f_in));
      }
    }
  }

  // labels
  auto label_lines = lines_of(labels_raw);
  if (static_cast<Index>(label_lines.size()) != b.n) {
    throw BundleError(BundleErrc::count_mismatch, "label count mismatch: labels: " + std::to_string(label_lines.size()) +
                                                      " != " + std::to_string(b.n));
  }
  b.labels.reserve(label_lines.size());
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto y = to_index(label_lines[i], "labels.csv line " + std::to_string(i + 1));
    if (y < 0 || y >= b.classes) {
      throw BundleError(BundleErrc::label_out_of_range, "label " + std::to_string(y) + " at node " + std::to_string(i) +
                                                            " outside [0, " + std::to_string(b.classes) + ")");
    }
    b.labels.push_back(static_cast<int>(y));
  }

  // edges
  auto edge_lines = lines_of(edges_raw);
  if (static_cast<Index>(edge_lines.size()) != b.m) {
    throw BundleError(BundleErrc::count_mismatch, "edge count mismatch: edges.csv has " +
                                                      std::to_string(edge_lines.size()) + " lines, meta.json says " +
                                                      std::to_string(b.m));
  }
  b.edges.reserve(edge_lines.size());
  for (std::size_t k = 0; k < edge_lines.size(); ++k) {
    const auto line = edge_lines[k];
    const auto comma = line.find(',');
    const auto where = "edges.csv line " + std::to_string(k + 1);
    if (comma == std::string_view::npos) throw BundleError(BundleErrc::malformed, where + ": expected tail,head");
    const auto t = to_index(line.substr(0, comma), where);
    const auto h = to_index(line.substr(comma + 1), where);
    if (t < 0 || h >= b.n || t >= h) {
      throw BundleError(BundleErrc::malformed, where + ": need 0 <= tail < head < n");
    }
    if (!b.edges.empty() && std::pair{t, h} <= b.edges.back()) {
      throw BundleError(BundleErrc::malformed, where + ": edges must be sorted and unique");
    }
    b.edges.emplace_back(t, h);
  }

  // masks
  if (has_masks) {
    auto mask_lines = lines_of(masks_raw);
    if (static_cast<Index>(mask_lines.size()) != b.n) {
      throw BundleError(BundleErrc::count_mismatch, "mask count mismatch: masks: " + std::to_string(mask_lines.size()) +
                                                        " != " + std::to_string(b.n));
    }
    std::vector<SplitTag> tags;
    tags.reserve(mask_lines.size());
    for (std::size_t i = 0; i < mask_lines.size(); ++i) {
      const auto s = mask_lines[i];
      if (s == "train") tags.push_back(SplitTag::train);
      else if (s == "val") tags.push_back(SplitTag::val);
      else if (s == "test") tags.push_back(SplitTag::test);
      else if (s == "none") tags.push_back(SplitTag::none);
      else throw BundleError(BundleErrc::malformed, "masks.csv line " + std::to_string(i + 1) + ": unknown tag");
    }
    b.masks = std::move(tags);
  }

  // Structural checks come first so truncation reports which count is off.
  if (const auto actual = sha256_hex(edges_raw + features_raw + labels_raw + masks_raw); actual != expected_sha) {
    throw BundleError(BundleErrc::checksum_mismatch,
                      "payload checksum mismatch: meta.json has " + expected_sha + ", payload hashes to " + actual);
  }

  if (auto stats = benchmark_stats(b.name)) {
    auto check = [&](const char* field, Index expected, Index actual) {
      if (expected != actual) {
        throw BundleError(BundleErrc::benchmark_mismatch, b.name + " " + field + ": " + std::to_string(actual) +
                                                              " != " + std::to_string(expected));
      }
    };
    check("n", stats->nodes, b.n);
    check("f_in", stats->features, b.f_in);
    check("classes", stats->classes, b.classes);
  }
  return b;
}

void save_bundle(const DatasetBundle& b, const std::string& dir_str) {
  const fs::path dir(dir_str);
  fs::create_directories(dir);
  if (b.features.rows() != b.n || b.features.cols() != b.f_in || static_cast<Index>(b.labels.size()) != b.n ||
      static_cast<Index>(b.edges.size()) != b.m) {
    throw std::invalid_argument("save_bundle: inconsistent bundle counts");
  }

  std::string edges;
  for (auto [t, h] : b.edges) edges += std::to_string(t) + "," + std::to_string(h) + "\n";
  std::string features(static_cast<std::size_t>(b.features.size()) * sizeof(float), '\0');
  if (!features.empty()) std::memcpy(features.data(), b.features.data(), features.size());
  std::string labels;
  for (int y : b.labels) labels += std::to_string(y) + "\n";
  std::string masks;
  if (b.masks) {
    for (auto t : *b.masks) masks += std::string(tag_name(t)) + "\n";
  }

  auto write = [&](const char* name, const std::string& bytes) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + (dir / name).string());
  };

  nlohmann::ordered_json meta;
  meta["name"] = b.name;
  meta["n"] = b.n;
  meta["m"] = b.m;
  meta["f_in"] = b.f_in;
  meta["classes"] = b.classes;
  meta["feature_dtype"] = "f32";
  meta["has_masks"] = b.masks.has_value();
  meta["payload_sha256"] = sha256_hex(edges + features + labels + masks);

  write("edges.csv", edges);
  write("features.bin", features);
  write("labels.csv", labels);
  if (b.masks) {
    write("masks.csv", masks);
  } else {
    fs::remove(dir / "masks.csv");
  }
  write("meta.json", meta.dump(2) + "\n");
}

void row_normalize(MatrixF& features) {
  for (Index i = 0; i < features.rows(); ++i) {
    const float s = features.row(i).sum();
    if (s != 0.0f) features.row(i) /= s;
  }
}

// --- splits ------------------------------------------------------------------

SplitSpec SplitSpec::from_tags(const std::vector<SplitTag>& tags, std::uint64_t seed) {
  SplitSpec s;
  s.seed = seed;
  s.train.assign(tags.size(), 0);
  s.val.assign(tags.size(), 0);
  s.test.assign(tags.size(), 0);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    s.train[i] = tags[i] == SplitTag::train;
    s.val[i] = tags[i] == SplitTag::val;
    s.test[i] = tags[i] == SplitTag::test;
  }
  return s;
}

Index SplitSpec::count_train() const { return std::count(train.begin(), train.end(), 1); }
Index SplitSpec::count_val() const { return std::count(val.begin(), val.end(), 1); }
Index SplitSpec::count_test() const { return std::count(test.begin(), test.end(), 1); }

namespace {

std::vector<std::vector<Index>> members_by_class(const DatasetBundle& b) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(b.classes));
  for (Index i = 0; i < b.n; ++i) by_class[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)])].push_back(i);
  return by_class;
}

void require_nonempty(const SplitSpec& s, const char* who) {
  if (s.count_train() == 0 || s.count_val() == 0 || s.count_test() == 0) {
    throw std::invalid_argument(std::string(who) + ": split has an empty train, val or test set");
  }
}

}  // namespace

SplitSpec semi_split(const DatasetBundle& b, std::uint64_t seed, SemiSplitSizes sizes) {
  if (b.masks) {
    auto s = SplitSpec::from_tags(*b.masks, seed);
    require_nonempty(s, "semi_split");
    return s;
  }
  auto by_class = members_by_class(b);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (static_cast<Index>(by_class[c].size()) < sizes.per_class) {
      throw std::invalid_argument("semi_split: insufficient nodes in class " + std::to_string(c) + " (" +
                                  std::to_string(by_class[c].size()) + " < " + std::to_string(sizes.per_class) + ")");
    }
  }
  if (b.n < sizes.per_class * b.classes + sizes.val + sizes.test) {
    throw std::invalid_argument("semi_split: insufficient nodes (" + std::to_string(b.n) + ")");
  }
  Rng rng(seed);
  std::vector<SplitTag> tags(static_cast<std::size_t>(b.n), SplitTag::none);
  for (auto& members : by_class) {
    rng.shuffle(members.begin(), members.end());
    for (Index k = 0; k < sizes.per_class; ++k) tags[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = SplitTag::train;
  }
  std::vector<Index> rest;
  for (Index i = 0; i < b.n; ++i) {
    if (tags[static_cast<std::size_t>(i)] == SplitTag::none) rest.push_back(i);
  }
  rng.shuffle(rest.begin(), rest.end());
  for (Index k = 0; k < sizes.val + sizes.test; ++k) {
    tags[static_cast<std::size_t>(rest[static_cast<std::size_t>(k)])] = k < sizes.val ? SplitTag::val : SplitTag::test;
  }
  auto s = SplitSpec::from_tags(tags, seed);
  require_nonempty(s, "semi_split");
  return s;
}

SplitSpec full_split(const DatasetBundle& b, std::uint64_t seed) {
  if (b.n < 10) throw std::invalid_argument("full_split: need at least 10 nodes");
  Rng rng(seed);
  std::vector<SplitTag> tags(static_cast<std::size_t>(b.n), SplitTag::train);
  auto assign = [&](std::vector<Index>& members) {
    rng.shuffle(members.begin(), members.end());
    const auto k = static_cast<Index>(members.size()) / 5;  // floor(0.2 n)
    for (Index j = 0; j < 2 * k; ++j) {
      tags[static_cast<std::size_t>(members[static_cast<std::size_t>(j)])] = j < k ? SplitTag::val : SplitTag::test;
    }
  };
  auto by_class = members_by_class(b);
  const bool stratify = std::all_of(by_class.begin(), by_class.end(), [](const auto& c) { return c.empty() || c.size() >= 3; });
  if (stratify) {
    for (auto& members : by_class) assign(members);
    auto s = SplitSpec::from_tags(tags, seed);
    if (s.count_val() > 0 && s.count_test() > 0) return s;
    std::fill(tags.begin(), tags.end(), SplitTag::train);
  }
  log::warn("full_split: class too small for a stratified split, using an unstratified one");
  std::vector<Index> all(static_cast<std::size_t>(b.n));
  for (Index i = 0; i < b.n; ++i) all[static_cast<std::size_t>(i)] = i;
  assign(all);
  return SplitSpec::from_tags(tags, seed);
}

// --- generators ----------------------------------------------------------------

Graph make_grid_graph(Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("make_grid_graph: dimensions must be positive");
  std::vector<Edge> edges;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index v = r * cols + c;
      if (c + 1 < cols) edges.push_back({v, v + 1});
      if (r + 1 < rows) edges.push_back({v, v + cols});
    }
  }
  return Graph(rows * cols, std::move(edges));
}

Graph make_cycle(Index n) {
  if (n < 3) throw std::invalid_argument("make_cycle: need n >= 3");
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  return Graph(n, std::move(edges));
}

Graph make_random(Index n, double p, std::uint64_t seed) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("make_random: need n >= 0 and p in [0, 1]");
  Rng rng(seed);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.push_back({i, j});
    }
  }
  return Graph(n, std::move(edges));
}

}  // namespace pdegnn
