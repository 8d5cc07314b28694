#include "pdegnn/verification.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>

#include "pdegnn/blocks.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/network.hpp"
#include "pdegnn/oracle.hpp"
#include "pdegnn/rng.hpp"

#include <Eigen/SVD>

namespace pdegnn::oracle {

namespace {

constexpr std::array kAllKinds{BlockKind::gcn,  BlockKind::advection, BlockKind::burgers, BlockKind::diffusion,
                               BlockKind::wave, BlockKind::mix_ad,    BlockKind::mix_aw};
constexpr std::array kConserving{BlockKind::advection, BlockKind::burgers, BlockKind::diffusion,
                                 BlockKind::wave,      BlockKind::mix_ad,  BlockKind::mix_aw};
constexpr std::array kActivations{Activation::relu, Activation::identity, Activation::elu, Activation::tanh};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

MatrixD random_matrix(Rng& rng, Index r, Index c, double lo, double hi) {
  MatrixD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Erdos-Renyi graph with each edge oriented at random.
Graph random_graph(Rng& rng, Index n, double p) {
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      if (!rng.bernoulli(p)) continue;
      if (rng.bernoulli(0.5)) {
        edges.push_back({i, j});
      } else {
        edges.push_back({j, i});
      }
    }
  return Graph(n, std::move(edges));
}

double sigmoid(double x) { return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x)); }

std::vector<double> sigmoid(const MatrixD& raw) {
  std::vector<double> out(static_cast<std::size_t>(raw.size()));
  for (Index i = 0; i < raw.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(raw.data()[i]);
  return out;
}

double max_abs(const MatrixD& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Random inputs for a single layer.
struct Trial {
  MatrixD u;
  MatrixD u_prev;
  MatrixD K;
  Activation act = Activation::relu;
  double h = 0.1;
  double alpha_raw = 0;
  MatrixD d_diff_raw;
  MatrixD d_wave_raw;
  std::optional<MatrixD> edge_weight;  // effective, pure kinds only
};

// The production block through the tape, with the optional advection fault.
struct Production {
  Tape<double> tape;
  const GraphOperators& ops;
  const VerifyOptions& opt;

  std::pair<MatrixD, MatrixD> step(BlockKind kind, const MatrixD& u, const MatrixD& u_prev, const Trial& t) {
    BlockState<double> s{tape.constant(u), tape.constant(u_prev)};
    BlockParams<double> p{tape.constant(t.K), t.act};
    MatrixD a(1, 1);
    a(0, 0) = t.alpha_raw;
    MixParams<double> mix{tape.constant(a), tape.constant(t.d_diff_raw), tape.constant(t.d_wave_raw)};
    std::optional<Var<double>> w;
    if (t.edge_weight) w = tape.constant(*t.edge_weight);
    const double h = kind == BlockKind::advection && opt.flip_advection_sign ? -t.h : t.h;
    BlockState<double> next;
    switch (kind) {
      case BlockKind::advection:
        next = advection_step(s, ops.gradient, ops.averaging, p, StepConfig{h}, w);
        break;
      case BlockKind::diffusion:
        next = diffusion_step(s, ops.gradient, p, StepConfig{h}, w);
        break;
      case BlockKind::wave:
        next = wave_step(s, ops.gradient, p, StepConfig{h}, w);
        break;
      default:
        next = block_step(kind, s, ops, p, &mix, StepConfig{h});
    }
    return {next.u_curr.value(), next.u_prev.value()};
  }
};

DenseBlockParams dense_params(const Trial& t) {
  DenseBlockParams p;
  p.K = DenseMatrix::from(t.K);
  p.activation = t.act;
  p.alpha = sigmoid(t.alpha_raw);
  p.d_diff = sigmoid(t.d_diff_raw);
  p.d_wave = sigmoid(t.d_wave_raw);
  if (t.edge_weight) {
    p.edge_weight = std::vector<double>(t.edge_weight->data(), t.edge_weight->data() + t.edge_weight->size());
  }
  return p;
}

template <typename F>
CheckResult timed(std::string name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

CheckResult check_conservation(const VerifyOptions& opt) {
  return timed("conservation", [&] {
    Rng rng = Rng::stream(opt.seed, 11);
    double worst = 0;
    std::string worst_kind = "-";
    long stacks = 0;
    long layers_total = 0;
    double gcn_drift = 0;
    auto run = [&](BlockKind kind, const Graph& g, int depth, Index c) {
      const GraphOperators ops(g);
      Trial t;
      t.act = kActivations[rng.below(kActivations.size())];
      t.h = kind == BlockKind::burgers ? 0.05 : 0.1;
      t.alpha_raw = rng.uniform(-2, 2);
      t.d_diff_raw = random_matrix(rng, g.m(), 1, -2, 2);
      t.d_wave_raw = random_matrix(rng, g.m(), 1, -2, 2);
      const double bound = glorot_bound(c, c);
      Production prod{{}, ops, opt};
      // The quadratic flux feeds back on the amplitude; start it smaller.
      const double amp = kind == BlockKind::burgers ? 0.25 : 1.0;
      MatrixD u = random_matrix(rng, g.n(), c, -amp, amp);
      MatrixD u_prev = u;
      std::vector<MatrixD> values{u};
      for (int l = 0; l < depth; ++l) {
        t.K = random_matrix(rng, c, c, -bound, bound);
        std::tie(u, u_prev) = prod.step(kind, u, u_prev, t);
        values.push_back(u);
      }
      return conservation_audit(values, conserves_mass(kind)).max_drift;
    };
    for (auto kind : kConserving) {
      for (int k = 0; k < opt.conservation_graphs; ++k) {
        const Index n = 2 + static_cast<Index>(rng.below(199));
        const Graph g = random_graph(rng, n, std::min(1.0, 3.0 / static_cast<double>(n)));
        const int depth = 1 + static_cast<int>(rng.below(64));
        const double drift = run(kind, g, depth, 4);
        ++stacks;
        layers_total += depth;
        if (!(drift <= worst) || std::isnan(drift)) {
          worst = drift;
          worst_kind = std::string(to_string(kind));
        }
      }
    }
    {
      const Graph g = random_graph(rng, 50, 0.1);
      gcn_drift = run(BlockKind::gcn, g, 8, 4);
    }
    CheckResult r;
    r.passed = worst <= 1e-9;
    r.detail = fmt("max |sum drift| %.3g (%s) over %ld stacks, %ld layers; gcn drift %.3g not asserted", worst,
                   worst_kind.c_str(), stacks, layers_total, gcn_drift);
    return r;
  });
}

CheckResult check_oracle_equivalence(const VerifyOptions& opt) {
  return timed("oracle_equivalence", [&] {
    Rng rng = Rng::stream(opt.seed, 12);
    double worst = 0;
    std::string worst_kind = "-";
    long trials = 0;
    for (auto kind : kAllKinds) {
      for (int k = 0; k < opt.oracle_trials; ++k) {
        const Index n = 1 + static_cast<Index>(rng.below(40));
        const Graph g = random_graph(rng, n, rng.uniform(0.05, 0.6));
        const Index c = 1 + static_cast<Index>(rng.below(6));
        const GraphOperators ops(g);
        const DenseOperators dense = dense_operators(g);
        Trial t;
        t.act = kActivations[rng.below(kActivations.size())];
        t.h = rng.uniform(0.05, 1.0);
        t.alpha_raw = rng.uniform(-3, 3);
        t.d_diff_raw = random_matrix(rng, g.m(), 1, -3, 3);
        t.d_wave_raw = random_matrix(rng, g.m(), 1, -3, 3);
        const bool weighted = kind == BlockKind::advection || kind == BlockKind::diffusion || kind == BlockKind::wave;
        if (weighted && rng.bernoulli(0.5)) t.edge_weight = random_matrix(rng, g.m(), 1, 0, 1);
        MatrixD u = random_matrix(rng, n, c, -1, 1);
        MatrixD u_prev = random_matrix(rng, n, c, -1, 1);
        DenseMatrix du = DenseMatrix::from(u);
        DenseMatrix du_prev = DenseMatrix::from(u_prev);
        Production prod{{}, ops, opt};
        const int steps = 1 + static_cast<int>(rng.below(3));
        for (int s = 0; s < steps; ++s) {
          t.K = random_matrix(rng, c, c, -1, 1);
          const double scale = std::max({max_abs(u), max_abs(u_prev), 1e-300});
          std::tie(u, u_prev) = prod.step(kind, u, u_prev, t);
          std::tie(du, du_prev) = dense_block_step(kind, dense, du, du_prev, dense_params(t), t.h);
          const MatrixD expect = du.to_eigen();
          const double err =
              max_abs(u - expect) / std::max({scale, max_abs(u), max_abs(expect)});
          if (!(err <= worst)) {
            worst = err;
            worst_kind = std::string(to_string(kind));
          }
        }
        ++trials;
      }
    }
    CheckResult r;
    r.passed = worst <= 1e-10;
    r.detail = fmt("max relative error %.3g (%s) over %ld trials", worst, worst_kind.c_str(), trials);
    return r;
  });
}

CheckResult check_gradients(const VerifyOptions& opt) {
  return timed("gradients", [&] {
    Rng rng = Rng::stream(opt.seed, 13);
    double worst = 0;
    std::string worst_where = "-";
    std::string failures;
    long coordinates = 0;
    for (auto kind : kAllKinds) {
      Graph g = random_graph(rng, 12, 0.3);
      while (g.m() == 0) g = random_graph(rng, 12, 0.3);
      ModelConfig cfg;
      cfg.block = kind;
      cfg.depth = 2;
      cfg.channels = 4;
      cfg.dropout = 0;
      cfg.h = 0.3;
      cfg.seed = rng.next();
      Model<double> model(cfg, g, 5, 3);
      if (model.mix) {
        model.mix->alpha_raw.value = random_matrix(rng, 1, 1, -1, 1);
        model.mix->d_diff_raw.value = random_matrix(rng, g.m(), 1, -1, 1);
        model.mix->d_wave_raw.value = random_matrix(rng, g.m(), 1, -1, 1);
      }
      std::vector<int> labels(12);
      std::vector<std::uint8_t> mask(12);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = static_cast<int>(rng.below(3));
        mask[i] = i % 3 != 2;
      }
      MatrixD x;
      auto loss_of = [&](Tape<double>& tape) {
        Rng unused(0);
        auto logits = forward(model, tape, tape.constant(x), false, unused);
        auto ce = ad::softmax_cross_entropy(logits, std::span<const int>(labels), std::span<const std::uint8_t>(mask));
        return ad::add(ce, ad::scale(l2_penalty(model, tape), 0.01));
      };
      // Keep every ReLU input at least 1e-3 from its kink so central
      // differences with step 1e-5 never straddle one.
      bool clear = false;
      for (int attempt = 0; attempt < 500 && !clear; ++attempt) {
        x = random_matrix(rng, 12, 5, -1, 1);
        Tape<double> tape;
        loss_of(tape);
        clear = tape.relu_margin() >= 1e-3;
      }
      if (!clear) {
        failures += " " + std::string(to_string(kind)) + ":no kink-free input";
        worst = std::max(worst, 1.0);
        continue;
      }
      {
        Tape<double> tape;
        tape.backward(loss_of(tape));
      }
      for (auto* p : model.parameters()) {
        const MatrixD analytic = p->grad;
        auto numeric = fd_gradient(
            [&] {
              Tape<double> tape;
              return loss_of(tape).value()(0, 0);
            },
            std::span<double>(p->value.data(), static_cast<std::size_t>(p->value.size())));
        coordinates += static_cast<long>(numeric.size());
        double diff = 0, na = 0, nf = 0;
        for (std::size_t k = 0; k < numeric.size(); ++k) {
          const double a = analytic.data()[k];
          diff += (a - numeric[k]) * (a - numeric[k]);
          na += a * a;
          nf += numeric[k] * numeric[k];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-8});
        if (!(rel <= worst)) {
          worst = rel;
          worst_where = std::string(to_string(kind)) + "/" + p->name;
        }
      }
    }
    CheckResult r;
    r.passed = worst <= 1e-4 && failures.empty();
    r.detail = fmt("max relative error %.3g (%s), %ld coordinates, 7 block kinds%s", worst, worst_where.c_str(),
                   coordinates, failures.c_str());
    return r;
  });
}

CheckResult check_reductions(const VerifyOptions& opt) {
  return timed("mixing_reductions", [&] {
    Rng rng = Rng::stream(opt.seed, 14);
    long mismatched = 0;
    long compared = 0;
    std::string first_bad;
    auto same = [&](const MatrixD& a, const MatrixD& b, const char* what) {
      ++compared;
      bool eq = a.rows() == b.rows() && a.cols() == b.cols();
      for (Index i = 0; eq && i < a.size(); ++i) eq = a.data()[i] == b.data()[i];
      if (!eq) {
        ++mismatched;
        if (first_bad.empty()) first_bad = what;
      }
    };
    for (int k = 0; k < 100; ++k) {
      const Index n = 2 + static_cast<Index>(rng.below(30));
      const Graph g = random_graph(rng, n, rng.uniform(0.1, 0.5));
      const Index c = 1 + static_cast<Index>(rng.below(5));
      const GraphOperators ops(g);
      Trial t;
      t.act = kActivations[rng.below(kActivations.size())];
      t.h = rng.uniform(0.1, 1.0);
      t.K = random_matrix(rng, c, c, -1, 1);
      t.d_diff_raw = random_matrix(rng, g.m(), 1, -3, 3);
      t.d_wave_raw = random_matrix(rng, g.m(), 1, -3, 3);
      const MatrixD u = random_matrix(rng, n, c, -1, 1);
      const MatrixD u_prev = random_matrix(rng, n, c, -1, 1);
      Production prod{{}, ops, opt};

      // sigmoid(+-1000) is exactly 1 or 0 in double precision.
      Trial one = t, zero = t;
      one.alpha_raw = 1000;
      zero.alpha_raw = -1000;
      Trial adv = t, diff = t, wave = t, adv_w = t;
      adv.edge_weight = MatrixD(Eigen::Map<const MatrixD>(sigmoid(t.d_wave_raw).data(), g.m(), 1));
      adv_w.edge_weight = adv.edge_weight;
      diff.edge_weight = MatrixD(Eigen::Map<const MatrixD>(sigmoid(t.d_diff_raw).data(), g.m(), 1));
      diff.h = t.h * t.h;
      wave.edge_weight = diff.edge_weight;

      same(prod.step(BlockKind::mix_ad, u, u, one).first, prod.step(BlockKind::advection, u, u, adv).first,
           "mix_ad(alpha=1) vs advection");
      same(prod.step(BlockKind::mix_ad, u, u, zero).first, prod.step(BlockKind::diffusion, u, u, diff).first,
           "mix_ad(alpha=0) vs diffusion(h^2)");
      same(prod.step(BlockKind::mix_aw, u, u_prev, one).first,
           prod.step(BlockKind::advection, u, u_prev, adv_w).first, "mix_aw(alpha=1) vs advection");
      same(prod.step(BlockKind::mix_aw, u, u_prev, zero).first, prod.step(BlockKind::wave, u, u_prev, wave).first,
           "mix_aw(alpha=0) vs wave");
    }
    CheckResult r;
    r.passed = mismatched == 0;
    r.detail = fmt("%ld of %ld comparisons differ%s%s", mismatched, compared, first_bad.empty() ? "" : ", first: ",
                   first_bad.c_str());
    return r;
  });
}

CheckResult check_mix_aw_relation(const VerifyOptions& opt) {
  return timed("mix_aw_relation", [&] {
    Rng rng = Rng::stream(opt.seed, 15);
    double worst = 0;
    int trials = 0;
    for (int k = 0; k < 200; ++k) {
      const Index n = 2 + static_cast<Index>(rng.below(40));
      const Graph g = random_graph(rng, n, rng.uniform(0.05, 0.5));
      const Index c = 1 + static_cast<Index>(rng.below(6));
      const GraphOperators ops(g);
      Trial t;
      t.act = kActivations[rng.below(kActivations.size())];
      t.h = rng.uniform(0.05, 1.0);
      t.K = random_matrix(rng, c, c, -1, 1);
      t.alpha_raw = k == 0 ? 0.0 : rng.uniform(-4, 4);
      t.d_diff_raw = random_matrix(rng, g.m(), 1, -3, 3);
      t.d_wave_raw = random_matrix(rng, g.m(), 1, -3, 3);
      const MatrixD u = random_matrix(rng, n, c, -1, 1);
      const MatrixD u_prev = random_matrix(rng, n, c, -1, 1);
      Production prod{{}, ops, opt};
      const MatrixD next = prod.step(BlockKind::mix_aw, u, u_prev, t).first;
      const double res = mix_aw_residual(dense_operators(g), DenseMatrix::from(next), DenseMatrix::from(u),
                                         DenseMatrix::from(u_prev), dense_params(t), t.h);
      worst = std::max(worst, res);
      ++trials;
    }
    CheckResult r;
    r.passed = worst <= 1e-10;
    r.detail = fmt("max residual %.3g over %d trials", worst, trials);
    return r;
  });
}

CheckResult check_oversmoothing(const VerifyOptions& opt) {
  return timed("oversmoothing", [&] {
    Rng rng = Rng::stream(opt.seed, 16);
    Graph g = random_graph(rng, 100, 0.05);
    while (!g.is_connected()) g = random_graph(rng, 100, 0.05);
    const Index c = 8;
    const GraphOperators ops(g);
    const MatrixD u0 = random_matrix(rng, g.n(), c, 0, 1);

    auto stack = [&](BlockKind kind, const Trial& t) {
      Production prod{{}, ops, opt};
      MatrixD u = u0, u_prev = u0;
      std::vector<MatrixD> layers{u};
      for (int l = 0; l < 50; ++l) {
        std::tie(u, u_prev) = prod.step(kind, u, u_prev, t);
        layers.push_back(u);
      }
      return smoothing_profile(layers, g);
    };
    auto ratio = [](const std::vector<double>& v) { return v.back() / v.front(); };

    Trial gcn;
    gcn.K = MatrixD::Identity(c, c);
    const auto gp = stack(BlockKind::gcn, gcn);
    const double gcn_norm = ratio(gp.normalized_variance);

    // Random K rescaled so h * |K|_2 * max degree = 1, a CFL-type bound that
    // keeps the explicit advection stack from blowing up.
    Index max_degree = 1;
    for (auto d : g.degrees()) max_degree = std::max(max_degree, d);
    double adv_norm = 1e300, adv_raw = 1e300, adv_peak = 0;
    for (int k = 0; k < 5; ++k) {
      Trial adv;
      adv.h = 0.5;
      adv.K = random_matrix(rng, c, c, -1, 1);
      const double spectral = Eigen::JacobiSVD<MatrixD>(adv.K).singularValues()(0);
      adv.K /= spectral * adv.h * static_cast<double>(max_degree);
      const auto ap = stack(BlockKind::advection, adv);
      adv_norm = std::min(adv_norm, ratio(ap.normalized_variance));
      adv_raw = std::min(adv_raw, ratio(ap.variance));
      adv_peak = std::max(adv_peak, ratio(ap.variance));
    }
    CheckResult r;
    r.passed = gcn_norm <= 1e-6 && adv_norm >= 1e-3 && adv_raw >= 1e-3;
    r.detail = fmt("variance ratio after 50 layers: gcn %.3g (plain %.3g), advection %.3g to %.3g (normalized min %.3g)",
                   gcn_norm, ratio(gp.variance), adv_raw, adv_peak, adv_norm);
    return r;
  });
}

CheckResult check_equivariance(const VerifyOptions& opt) {
  return timed("permutation_equivariance", [&] {
    Rng rng = Rng::stream(opt.seed, 17);
    double worst = 0;
    std::string worst_kind = "-";
    for (auto kind : kAllKinds) {
      const Index n = 20;
      const Graph g = random_graph(rng, n, 0.2);
      std::vector<Index> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), Index{0});
      rng.shuffle(perm.begin(), perm.end());
      const Graph gp = g.permuted(perm);

      ModelConfig cfg;
      cfg.block = kind;
      cfg.depth = 4;
      cfg.channels = 8;
      cfg.dropout = 0;
      cfg.h = 0.3;
      cfg.seed = rng.next();
      Model<float> a(cfg, g, 6, 3);
      Model<float> b(cfg, gp, 6, 3);
      if (a.mix) {
        // Edge order is preserved by relabelling, so edge parameters carry over.
        a.mix->alpha_raw.value = random_matrix(rng, 1, 1, -1, 1).cast<float>();
        a.mix->d_diff_raw.value = random_matrix(rng, g.m(), 1, -1, 1).cast<float>();
        a.mix->d_wave_raw.value = random_matrix(rng, g.m(), 1, -1, 1).cast<float>();
        b.mix->alpha_raw.value = a.mix->alpha_raw.value;
        b.mix->d_diff_raw.value = a.mix->d_diff_raw.value;
        b.mix->d_wave_raw.value = a.mix->d_wave_raw.value;
      }
      const MatrixF x = random_matrix(rng, n, 6, -1, 1).cast<float>();
      MatrixF xp(n, 6);
      for (Index i = 0; i < n; ++i) xp.row(perm[static_cast<std::size_t>(i)]) = x.row(i);
      const MatrixF la = predict(a, x);
      const MatrixF lb = predict(b, xp);
      for (Index i = 0; i < n; ++i) {
        const double d = (la.row(i) - lb.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff();
        if (!(d <= worst)) {
          worst = d;
          worst_kind = std::string(to_string(kind));
        }
      }
    }
    CheckResult r;
    r.passed = worst <= 1e-6;
    r.detail = fmt("max |logit difference| %.3g (%s), float32, 7 block kinds", worst, worst_kind.c_str());
    return r;
  });
}

std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
  return {check_conservation(opt),     check_oracle_equivalence(opt), check_gradients(opt),
          check_reductions(opt),       check_mix_aw_relation(opt),    check_oversmoothing(opt),
          check_equivariance(opt)};
}

std::string format_check(const CheckResult& r) {
  return fmt("%s %s (%s) [%.2fs]", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
}

}  // namespace pdegnn::oracle
