#include "pdegnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace pdegnn {

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optim config: lr must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim config: weight_decay must be >= 0");
  if (max_epochs < 0) throw std::invalid_argument("optim config: max_epochs must be >= 0");
  if (eval_every <= 0) throw std::invalid_argument("optim config: eval_every must be positive");
  if (patience <= 0 || patience > std::max(max_epochs, 1)) {
    throw std::invalid_argument("optim config: patience must be in [1, max_epochs]");
  }
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const OptimConfig& cfg) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed");
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState<T>::beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState<T>::beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(AdamState<T>::beta1);
  const T b2 = static_cast<T>(AdamState<T>::beta2);
  const T step_size = static_cast<T>(cfg.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(AdamState<T>::eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw std::invalid_argument("adam_step: gradient of '" + p->name + "' has the wrong shape");
    }
    Matrix<T> g = p->grad;
    if (p->weight_decay && cfg.weight_decay > 0.0) g += static_cast<T>(cfg.weight_decay) * p->value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    p->value.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_c2 + eps);
  }
}

template <typename T>
TrainingData<T> TrainingData<T>::from_bundle(const DatasetBundle& b, bool normalize_features) {
  MatrixF f = b.features;
  if (normalize_features) row_normalize(f);
  TrainingData<T> d;
  d.name = b.name;
  d.features = f.template cast<T>();
  d.labels = b.labels;
  d.classes = b.classes;
  return d;
}

template <typename T>
double accuracy(const Matrix<T>& logits, std::span<const int> labels, std::span<const std::uint8_t> mask) {
  Index hits = 0;
  Index total = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0) continue;
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    hits += best == labels[static_cast<std::size_t>(i)];
    ++total;
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

template <typename T>
double evaluate(Model<T>& model, const TrainingData<T>& data, std::span<const std::uint8_t> mask) {
  return accuracy<T>(predict(model, data.features), data.labels, mask);
}

TrainingDiverged::TrainingDiverged(int epoch, std::vector<std::pair<std::string, double>> norms)
    : std::runtime_error([&] {
        std::string msg = "training loss is not finite at epoch " + std::to_string(epoch) + "; parameter norms:";
        for (const auto& [name, norm] : norms) msg += " " + name + "=" + std::to_string(norm);
        return msg;
      }()),
      epoch_(epoch),
      norms_(std::move(norms)) {}

template <typename T>
RunResult train(Model<T>& model, const TrainingData<T>& data, const SplitSpec& split, const OptimConfig& cfg,
                std::uint64_t seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  auto params = model.parameters();
  auto snapshot = [&] {
    std::vector<Matrix<T>> values;
    for (auto* p : params) values.push_back(p->value);
    return values;
  };

  RunResult result;
  result.seed = seed;
  {
    auto echo = model.config().to_key_values();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", cfg.lr);
    echo.set("lr", buf);
    std::snprintf(buf, sizeof buf, "%.17g", cfg.weight_decay);
    echo.set("weight_decay", buf);
    echo.set("max_epochs", std::to_string(cfg.max_epochs));
    echo.set("patience", std::to_string(cfg.patience));
    echo.set("eval_every", std::to_string(cfg.eval_every));
    result.config_echo = echo.to_text();
  }

  result.best_val_acc = evaluate(model, data, split.val);
  auto best = snapshot();
  Rng rng = Rng::stream(seed, 1);
  AdamState<T> adam;
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    {
      Tape<T> tape;
      auto logits = forward(model, tape, tape.constant(data.features), true, rng);
      auto loss = ad::softmax_cross_entropy(logits, std::span<const int>(data.labels), std::span(split.train));
      const double loss_value = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(loss_value)) {
        std::vector<std::pair<std::string, double>> norms;
        for (auto* p : params) norms.emplace_back(p->name, static_cast<double>(p->value.norm()));
        throw TrainingDiverged(epoch, std::move(norms));
      }
      result.losses.push_back(loss_value);
      tape.backward(loss);
    }
    adam_step<T>(params, adam, cfg);
    result.epochs_ran = epoch;

    if (epoch % cfg.eval_every != 0) continue;
    const double val = evaluate(model, data, split.val);
    if (val > result.best_val_acc) {
      result.best_val_acc = val;
      result.best_epoch = epoch;
      best = snapshot();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
  result.test_acc_at_best_val = evaluate(model, data, split.test);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// --- results CSV -------------------------------------------------------------

std::string format_result_row(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%llu,%.2f,%.2f,%d,%.3f,%s", r.dataset.c_str(), r.block.c_str(), r.depth,
                static_cast<unsigned long long>(r.seed), r.best_val, r.test, r.epochs, r.seconds,
                r.config_hash.c_str());
  return buf;
}

void append_results_csv(const std::string& path, std::span<const ResultRow> rows) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path);
  if (fresh) out << kResultsHeader << '\n';
  for (const auto& r : rows) out << format_result_row(r) << '\n';
}

std::string config_hash(const KeyValues& config) { return sha256_hex(config.to_text()).substr(0, 16); }

#define PDEGNN_INSTANTIATE_TRAINER(T)                                                                       \
  template void adam_step<T>(std::span<Parameter<T>* const>, AdamState<T>&, const OptimConfig&);           \
  template struct TrainingData<T>;                                                                          \
  template double accuracy<T>(const Matrix<T>&, std::span<const int>, std::span<const std::uint8_t>);      \
  template double evaluate<T>(Model<T>&, const TrainingData<T>&, std::span<const std::uint8_t>);           \
  template RunResult train<T>(Model<T>&, const TrainingData<T>&, const SplitSpec&, const OptimConfig&,     \
                              std::uint64_t);

PDEGNN_INSTANTIATE_TRAINER(float)
PDEGNN_INSTANTIATE_TRAINER(double)

#undef PDEGNN_INSTANTIATE_TRAINER

}  // namespace pdegnn
