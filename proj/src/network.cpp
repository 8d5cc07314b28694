#include "pdegnn/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pdegnn {

void ModelConfig::validate() const {
  if (depth < 0) throw std::invalid_argument("model config: depth must be >= 0");
  if (channels <= 0) throw std::invalid_argument("model config: channels must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model config: dropout must be in [0, 1)");
  if (!(h > 0.0)) throw std::invalid_argument("model config: h must be positive");
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("block", std::string(to_string(block)));
  kv.set("depth", std::to_string(depth));
  kv.set("channels", std::to_string(channels));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", dropout);
  kv.set("dropout", buf);
  std::snprintf(buf, sizeof buf, "%.17g", h);
  kv.set("h", buf);
  kv.set("activation", std::string(to_string(activation)));
  kv.set("tie_weights", tie_weights ? "true" : "false");
  kv.set("seed", std::to_string(seed));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, const ModelConfig& defaults) {
  ModelConfig cfg = defaults;
  if (auto v = kv.get("block")) cfg.block = parse_block_kind(*v);
  if (auto v = kv.get("depth")) cfg.depth = static_cast<int>(parse_int("depth", *v));
  if (auto v = kv.get("channels")) cfg.channels = static_cast<int>(parse_int("channels", *v));
  if (auto v = kv.get("dropout")) cfg.dropout = parse_double("dropout", *v);
  if (auto v = kv.get("h")) cfg.h = parse_double("h", *v);
  if (auto v = kv.get("activation")) cfg.activation = parse_activation(*v);
  if (auto v = kv.get("tie_weights")) cfg.tie_weights = parse_bool("tie_weights", *v);
  if (auto v = kv.get("seed")) cfg.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
  return cfg;
}

double glorot_bound(Index fan_in, Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

template <typename T>
Parameter<T> glorot(std::string name, Index rows, Index cols, Rng& rng) {
  const double bound = glorot_bound(rows, cols);
  Matrix<T> w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  return {std::move(name), std::move(w), Matrix<T>::Zero(rows, cols), true};
}

template <typename T>
Parameter<T> zeros(std::string name, Index rows, Index cols) {
  return {std::move(name), Matrix<T>::Zero(rows, cols), Matrix<T>::Zero(rows, cols), false};
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg, const Graph& graph, Index f_in, Index classes)
    : cfg_(cfg), graph_(std::make_shared<const Graph>(graph)), ops_(std::make_shared<const GraphOperators>(graph)) {
  cfg_.validate();
  if (f_in <= 0 || classes <= 0) throw std::invalid_argument("model: f_in and classes must be positive");
  Rng rng(cfg_.seed);
  const Index c = cfg_.channels;
  w_in = glorot<T>("w_in", f_in, c, rng);
  const int n_kernels = cfg_.depth == 0 ? 0 : (cfg_.tie_weights ? 1 : cfg_.depth);
  kernels.reserve(static_cast<std::size_t>(n_kernels));
  for (int l = 0; l < n_kernels; ++l) {
    kernels.push_back(glorot<T>(cfg_.tie_weights ? "K.shared" : "K." + std::to_string(l), c, c, rng));
  }
  w_out = glorot<T>("w_out", c, classes, rng);
  if (is_mixing(cfg_.block)) {
    mix = MixParameters<T>{zeros<T>("alpha_raw", 1, 1), zeros<T>("d_diff_raw", graph.m(), 1),
                           zeros<T>("d_wave_raw", graph.m(), 1)};
  }
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out{&w_in};
  for (auto& k : kernels) out.push_back(&k);
  out.push_back(&w_out);
  if (mix) {
    out.push_back(&mix->alpha_raw);
    out.push_back(&mix->d_diff_raw);
    out.push_back(&mix->d_wave_raw);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  auto ptrs = const_cast<Model*>(this)->parameters();
  return {ptrs.begin(), ptrs.end()};
}

template <typename T>
std::vector<Var<T>> propagate(Model<T>& model, Tape<T>& tape, Var<T> u0) {
  const auto& cfg = model.config();
  std::optional<MixParams<T>> mix;
  if (model.mix) {
    mix = MixParams<T>{tape.parameter(model.mix->alpha_raw), tape.parameter(model.mix->d_diff_raw),
                       tape.parameter(model.mix->d_wave_raw)};
  }
  std::vector<Var<T>> layers{u0};
  layers.reserve(static_cast<std::size_t>(cfg.depth) + 1);
  auto state = BlockState<T>::start(u0);
  for (int l = 0; l < cfg.depth; ++l) {
    BlockParams<T> p{tape.parameter(model.kernel(l)), cfg.activation};
    state = block_step(cfg.block, state, model.operators(), p, mix ? &*mix : nullptr, StepConfig{cfg.h});
    layers.push_back(state.u_curr);
  }
  return layers;
}

template <typename T>
Var<T> forward(Model<T>& model, Tape<T>& tape, Var<T> features, bool training, Rng& rng, std::vector<Var<T>>* layers) {
  if (features.cols() != model.f_in()) {
    throw std::invalid_argument("forward: features have " + std::to_string(features.cols()) + " columns, model expects " +
                                std::to_string(model.f_in()));
  }
  if (features.rows() != model.graph().n()) {
    throw std::invalid_argument("forward: features have " + std::to_string(features.rows()) + " rows, graph has " +
                                std::to_string(model.graph().n()) + " nodes");
  }
  const double p = model.config().dropout;
  auto x = ad::dropout(features, p, training, rng);
  auto u0 = ad::relu(ad::matmul(x, tape.parameter(model.w_in)));
  auto states = propagate(model, tape, u0);
  auto top = ad::dropout(states.back(), p, training, rng);
  auto logits = ad::matmul(top, tape.parameter(model.w_out));
  if (layers != nullptr) *layers = std::move(states);
  return logits;
}

template <typename T>
Matrix<T> predict(Model<T>& model, const Matrix<T>& features) {
  Tape<T> tape;
  Rng unused(0);
  return forward(model, tape, tape.constant(features), false, unused).value();
}

template <typename T>
Var<T> l2_penalty(Model<T>& model, Tape<T>& tape) {
  Matrix<T> zero = Matrix<T>::Zero(1, 1);
  Var<T> total = tape.constant(zero);
  for (auto* p : model.parameters()) {
    if (!p->weight_decay) continue;
    auto w = tape.parameter(*p);
    total = ad::add(total, ad::sum(ad::hadamard(w, w)));
  }
  return ad::scale(total, T(0.5));
}

// --- checkpoints -----------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V take(std::ifstream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint truncated: " + path);
  return v;
}

std::string take_string(std::ifstream& in, std::uint32_t len, const std::string& path) {
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw std::runtime_error("checkpoint truncated: " + path);
  return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path, const KeyValues& extra_config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  auto cfg = model.config().to_key_values();
  cfg.merge(extra_config);
  const auto text = cfg.to_text();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic - 1);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = model.parameters();
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put(out, static_cast<std::int64_t>(p->value.rows()));
    put(out, static_cast<std::int64_t>(p->value.cols()));
    for (Index i = 0; i < p->value.size(); ++i) put(out, static_cast<double>(p->value.data()[i]));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[sizeof kCheckpointMagic - 1];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a PDEGNN1 checkpoint: " + path);
  }
  Checkpoint ckpt;
  const auto cfg_len = take<std::uint32_t>(in, path);
  ckpt.config = KeyValues::parse(take_string(in, cfg_len, path));
  const auto count = take<std::uint32_t>(in, path);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = take_string(in, take<std::uint32_t>(in, path), path);
    t.rows = take<std::int64_t>(in, path);
    t.cols = take<std::int64_t>(in, path);
    if (t.rows < 0 || t.cols < 0) throw std::runtime_error("checkpoint has negative shape: " + path);
    t.values.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (auto& v : t.values) v = take<double>(in, path);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
void load_checkpoint(Model<T>& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& t = ckpt.tensors[k];
    auto* p = params[k];
    if (t.name != p->name || t.rows != p->value.rows() || t.cols != p->value.cols()) {
      throw std::runtime_error("checkpoint: tensor '" + t.name + "' does not match model parameter '" + p->name + "'");
    }
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<T>(t.values[static_cast<std::size_t>(i)]);
  }
}

#define PDEGNN_INSTANTIATE_NETWORK(T)                                                                     \
  template class Model<T>;                                                                                \
  template Var<T> forward<T>(Model<T>&, Tape<T>&, Var<T>, bool, Rng&, std::vector<Var<T>>*);              \
  template std::vector<Var<T>> propagate<T>(Model<T>&, Tape<T>&, Var<T>);                                 \
  template Matrix<T> predict<T>(Model<T>&, const Matrix<T>&);                                             \
  template Var<T> l2_penalty<T>(Model<T>&, Tape<T>&);                                                     \
  template void save_checkpoint<T>(const Model<T>&, const std::string&, const KeyValues&);               \
  template void load_checkpoint<T>(Model<T>&, const Checkpoint&);

PDEGNN_INSTANTIATE_NETWORK(float)
PDEGNN_INSTANTIATE_NETWORK(double)

#undef PDEGNN_INSTANTIATE_NETWORK

}  // namespace pdegnn
