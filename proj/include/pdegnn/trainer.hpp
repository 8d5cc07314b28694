#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdegnn/data_io.hpp"
#include "pdegnn/network.hpp"

namespace pdegnn {

struct OptimConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 1500;
  int patience = 100;  ///< evaluations without improvement before stopping
  int eval_every = 1;

  void validate() const;
};

/// Adam moments for one model's parameter list (same order as
/// Model::parameters()).
template <typename T>
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  long step = 0;
};

/// One bias-corrected Adam update from the grads stored on the parameters.
/// L2 weight decay (wd * w) is added to the gradient of eligible parameters.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const OptimConfig& cfg);

/// Features converted to the training precision plus labels.
template <typename T>
struct TrainingData {
  std::string name;
  Matrix<T> features;
  std::vector<int> labels;
  Index classes = 0;

  static TrainingData from_bundle(const DatasetBundle& b, bool normalize_features);
};

/// Percentage of masked rows whose argmax (lowest index on ties) equals the label.
template <typename T>
double accuracy(const Matrix<T>& logits, std::span<const int> labels, std::span<const std::uint8_t> mask);

template <typename T>
double evaluate(Model<T>& model, const TrainingData<T>& data, std::span<const std::uint8_t> mask);

struct RunResult {
  double best_val_acc = 0;
  double test_acc_at_best_val = 0;
  int best_epoch = 0;
  int epochs_ran = 0;
  double wall_seconds = 0;
  std::uint64_t seed = 0;
  std::string config_echo;     ///< key=value text
  std::vector<double> losses;  ///< training loss per epoch
};

/// Thrown when the training loss stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::vector<std::pair<std::string, double>> norms);
  int epoch() const { return epoch_; }
  const std::vector<std::pair<std::string, double>>& parameter_norms() const { return norms_; }

 private:
  int epoch_;
  std::vector<std::pair<std::string, double>> norms_;
};

/// Full-graph training with early stopping on validation accuracy. On return
/// the model holds the parameters of the best validation epoch.
template <typename T>
RunResult train(Model<T>& model, const TrainingData<T>& data, const SplitSpec& split, const OptimConfig& cfg,
                std::uint64_t seed);

// --- results CSV -------------------------------------------------------------

inline constexpr char kResultsHeader[] = "dataset,block,depth,seed,best_val,test,epochs,seconds,config_hash";

struct ResultRow {
  std::string dataset;
  std::string block;
  int depth = 0;
  std::uint64_t seed = 0;
  double best_val = 0;
  double test = 0;
  int epochs = 0;
  double seconds = 0;
  std::string config_hash;
};

std::string format_result_row(const ResultRow& row);
/// Appends rows, writing the header first when the file is new or empty.
void append_results_csv(const std::string& path, std::span<const ResultRow> rows);
/// First 16 hex digits of the SHA-256 of the canonical config text.
std::string config_hash(const KeyValues& config);

}  // namespace pdegnn
