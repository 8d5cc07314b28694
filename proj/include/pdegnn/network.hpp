#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdegnn/autodiff.hpp"
#include "pdegnn/blocks.hpp"
#include "pdegnn/config.hpp"
#include "pdegnn/graph.hpp"
#include "pdegnn/rng.hpp"

namespace pdegnn {

struct ModelConfig {
  BlockKind block = BlockKind::mix_ad;
  int depth = 2;
  int channels = 64;
  double dropout = 0.5;
  double h = 0.6;
  Activation activation = Activation::relu;
  bool tie_weights = false;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Keys: block, depth, channels, dropout, h, activation, tie_weights, seed.
  KeyValues to_key_values() const;
  /// Fields missing from `kv` keep the values of `defaults`.
  static ModelConfig from_key_values(const KeyValues& kv, const ModelConfig& defaults);
  static ModelConfig from_key_values(const KeyValues& kv);
};

template <typename T>
struct MixParameters {
  Parameter<T> alpha_raw;   ///< 1 x 1
  Parameter<T> d_diff_raw;  ///< m x 1
  Parameter<T> d_wave_raw;  ///< m x 1
};

/// Node classifier: dropout -> 1x1 embedding -> ReLU -> L blocks -> dropout
/// -> 1x1 classifier. Copies share the (immutable) graph operators.
template <typename T>
class Model {
 public:
  /// Glorot-uniform weights from Rng(cfg.seed) in the order w_in, kernels,
  /// w_out; mixing raws start at zero (alpha = 0.5, D = 0.5).
  Model(const ModelConfig& cfg, const Graph& graph, Index f_in, Index classes);

  const ModelConfig& config() const { return cfg_; }
  const Graph& graph() const { return *graph_; }
  const GraphOperators& operators() const { return *ops_; }
  Index f_in() const { return w_in.value.rows(); }
  Index classes() const { return w_out.value.cols(); }

  /// Kernel used at layer l (the shared one when weights are tied).
  Parameter<T>& kernel(int layer) { return kernels[cfg_.tie_weights ? 0 : static_cast<std::size_t>(layer)]; }

  /// All trainable parameters in a fixed order.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  Parameter<T> w_in;
  Parameter<T> w_out;
  std::vector<Parameter<T>> kernels;
  std::optional<MixParameters<T>> mix;

 private:
  ModelConfig cfg_;
  std::shared_ptr<const Graph> graph_;
  std::shared_ptr<const GraphOperators> ops_;
};

template <typename T>
Model<T> init_model(const ModelConfig& cfg, const Graph& graph, Index f_in, Index classes) {
  return Model<T>(cfg, graph, f_in, classes);
}

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(Index fan_in, Index fan_out);

/// Records the classifier on `tape` and returns n x classes logits.
/// `layers`, when given, receives the features entering the block stack
/// followed by the output of every block (depth + 1 entries).
template <typename T>
Var<T> forward(Model<T>& model, Tape<T>& tape, Var<T> features, bool training, Rng& rng,
               std::vector<Var<T>>* layers = nullptr);

/// Runs only the block stack from u0 (no embedding, no dropout).
template <typename T>
std::vector<Var<T>> propagate(Model<T>& model, Tape<T>& tape, Var<T> u0);

/// Eval-mode logits as plain values.
template <typename T>
Matrix<T> predict(Model<T>& model, const Matrix<T>& features);

/// 1/2 sum of squares over weight-decay-eligible parameters (w_in, w_out, K).
template <typename T>
Var<T> l2_penalty(Model<T>& model, Tape<T>& tape);

// --- checkpoints -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::vector<double> values;  ///< row-major
};

struct Checkpoint {
  KeyValues config;
  std::vector<NamedTensor> tensors;
};

inline constexpr char kCheckpointMagic[] = "PDEGNN1\n";

/// Binary layout, little-endian:
///   "PDEGNN1\n"
///   u32 config_bytes, config text (key=value lines, model config echo)
///   u32 tensor_count
///   per tensor: u32 name_bytes, name, i64 rows, i64 cols, f64[rows*cols]
template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path, const KeyValues& extra_config = {});
Checkpoint read_checkpoint(const std::string& path);
/// Copies tensors into a model of matching names and shapes.
template <typename T>
void load_checkpoint(Model<T>& model, const Checkpoint& ckpt);

}  // namespace pdegnn
