#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>

#include "pdegnn/blocks.hpp"
#include "pdegnn/data_io.hpp"
#include "pdegnn/experiment.hpp"
#include "pdegnn/graph.hpp"
#ifdef PDEGNN_HAS_ORACLE
#include "pdegnn/verification.hpp"
#endif

namespace py = pybind11;
using namespace pdegnn;

namespace {

std::vector<std::pair<Index, Index>> edge_pairs(const Graph& g) {
  std::vector<std::pair<Index, Index>> out;
  for (const auto& e : g.edges()) out.emplace_back(e.tail, e.head);
  return out;
}

Graph graph_from_pairs(Index n, const std::vector<std::pair<Index, Index>>& pairs) {
  std::vector<Edge> edges;
  for (auto [t, h] : pairs) edges.push_back({t, h});
  return Graph(n, std::move(edges));
}

py::dict split_dict(const SplitSpec& s) {
  auto arr = [](const std::vector<std::uint8_t>& v) {
    py::array_t<bool> a(static_cast<py::ssize_t>(v.size()));
    auto m = a.mutable_unchecked<1>();
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<py::ssize_t>(i)) = v[i] != 0;
    return a;
  };
  py::dict d;
  d["train"] = arr(s.train);
  d["val"] = arr(s.val);
  d["test"] = arr(s.test);
  return d;
}

py::dict run_dict(const RunRecord& r) {
  py::dict d;
  d["dataset"] = r.row.dataset;
  d["block"] = r.row.block;
  d["depth"] = r.depth;
  d["seed"] = r.seed;
  d["best_val"] = r.result.best_val_acc;
  d["test"] = r.result.test_acc_at_best_val;
  d["best_epoch"] = r.result.best_epoch;
  d["epochs"] = r.result.epochs_ran;
  d["seconds"] = r.result.wall_seconds;
  d["losses"] = r.result.losses;
  d["config_hash"] = r.row.config_hash;
  d["error"] = r.error;
  if (r.profile) {
    d["variance"] = r.profile->variance;
    d["normalized_variance"] = r.profile->normalized_variance;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "PDE-block graph neural networks";

  py::class_<Graph>(m, "Graph")
      .def(py::init(&graph_from_pairs), py::arg("n"), py::arg("edges"),
           "Oriented edge list (tail, head); rejects self-loops and duplicates.")
      .def_static(
          "from_undirected",
          [](Index n, const std::vector<std::pair<Index, Index>>& pairs) { return Graph::from_undirected(n, pairs); },
          py::arg("n"), py::arg("pairs"))
      .def_property_readonly("n", &Graph::n)
      .def_property_readonly("m", &Graph::m)
      .def_property_readonly("edges", &edge_pairs)
      .def("degrees", &Graph::degrees)
      .def("is_connected", &Graph::is_connected)
      .def("permuted", [](const Graph& g, const std::vector<Index>& perm) { return g.permuted(perm); });

  m.def("make_grid_graph", &make_grid_graph, py::arg("rows"), py::arg("cols"));
  m.def("make_cycle", &make_cycle, py::arg("n"));
  m.def("make_random", &make_random, py::arg("n"), py::arg("p"), py::arg("seed"));

  m.def("gradient_matrix", [](const Graph& g) { return build_gradient(g).to_dense(); },
        "Dense m x n incidence: -1 at the tail, +1 at the head.");
  m.def("averaging_matrix", [](const Graph& g) { return build_averaging(g).to_dense(); });
  m.def("propagation_matrix", [](const Graph& g) { return build_gcn_propagation(g).to_dense(); });

  m.def(
      "evaluate_block",
      [](const std::string& kind, const Graph& g, const MatrixD& u, const MatrixD& K, double h,
         const std::string& activation, std::optional<MatrixD> u_prev, double alpha_raw, std::optional<MatrixD> d_diff_raw,
         std::optional<MatrixD> d_wave_raw) {
        const GraphOperators ops(g);
        BlockInputs<double> in;
        in.u = u;
        in.K = K;
        in.h = h;
        in.activation = parse_activation(activation);
        if (u_prev) in.u_prev = *u_prev;
        in.alpha_raw = alpha_raw;
        if (d_diff_raw) in.d_diff_raw = *d_diff_raw;
        if (d_wave_raw) in.d_wave_raw = *d_wave_raw;
        return evaluate_block(parse_block_kind(kind), ops, in);
      },
      py::arg("kind"), py::arg("graph"), py::arg("u"), py::arg("K"), py::arg("h") = 0.1,
      py::arg("activation") = "relu", py::arg("u_prev") = py::none(), py::arg("alpha_raw") = 0.0,
      py::arg("d_diff_raw") = py::none(), py::arg("d_wave_raw") = py::none(),
      "One block layer in double precision; returns (u_next, u_prev_next).");

  py::class_<DatasetBundle>(m, "Bundle")
      .def_readonly("name", &DatasetBundle::name)
      .def_readonly("n", &DatasetBundle::n)
      .def_readonly("m", &DatasetBundle::m)
      .def_readonly("f_in", &DatasetBundle::f_in)
      .def_readonly("classes", &DatasetBundle::classes)
      .def_readonly("features", &DatasetBundle::features)
      .def_readonly("labels", &DatasetBundle::labels)
      .def_readonly("edges", &DatasetBundle::edges)
      .def_property_readonly("masks",
                             [](const DatasetBundle& b) -> py::object {
                               if (!b.masks) return py::none();
                               return split_dict(SplitSpec::from_tags(*b.masks, 0));
                             })
      .def("graph", &DatasetBundle::graph);

  py::register_exception<BundleError>(m, "BundleError", PyExc_ValueError);

  m.def("load_bundle", &load_bundle, py::arg("path"));
  m.def(
      "split",
      [](const DatasetBundle& b, const std::string& mode, std::uint64_t seed) {
        return split_dict(make_split(b, parse_split_mode(mode), seed));
      },
      py::arg("bundle"), py::arg("mode") = "semi", py::arg("seed") = 0);

  m.def(
      "dataset_preset",
      [](const std::string& name, const std::string& mode) -> py::object {
        auto p = dataset_preset(name, parse_split_mode(mode));
        if (!p) return py::none();
        py::dict d;
        d["lr"] = p->lr;
        d["weight_decay"] = p->weight_decay;
        d["channels"] = p->channels;
        d["dropout"] = p->dropout;
        d["h"] = p->h;
        return d;
      },
      py::arg("dataset"), py::arg("mode") = "semi");

  m.def(
      "train",
      [](const std::string& dataset, const std::map<std::string, std::string>& settings, bool profile) {
        KeyValues kv;
        for (const auto& [k, v] : settings) kv.set(k, v);
        const std::string path = resolve_dataset_path(dataset);
        kv.set("dataset", path);
        const auto bundle = load_bundle(path);
        const auto cfg = resolve_config(kv, bundle.name);
        std::vector<RunRecord> runs;
        {
          py::gil_scoped_release release;
          runs = run_grid(bundle, cfg, profile);
        }
        py::list out;
        for (const auto& r : runs) out.append(run_dict(r));
        return out;
      },
      py::arg("dataset"), py::arg("settings") = std::map<std::string, std::string>{}, py::arg("profile") = false,
      "Train every (depth, seed) of the resolved config; settings use config-file keys.");

#ifdef PDEGNN_HAS_ORACLE
  m.def(
      "verify",
      [](bool flip_advection_sign) {
        oracle::VerifyOptions opt;
        opt.flip_advection_sign = flip_advection_sign;
        py::list out;
        for (const auto& r : oracle::run_verification(opt)) out.append(py::make_tuple(r.name, r.passed, r.detail));
        return out;
      },
      py::arg("flip_advection_sign") = false, "Run the property checks; returns (name, passed, detail) tuples.");
#endif
}
