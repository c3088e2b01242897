#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "craft/bench.hpp"
#include "craft/checkpoint.hpp"
#include "craft/pipeline.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json to_json(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return json::parse(obj.cast<std::string>());
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object to_python(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

craft::Phase phase_from(const std::string& split) {
  if (split == "val") return craft::Phase::kVal;
  if (split == "test") return craft::Phase::kTest;
  throw std::invalid_argument("split must be 'val' or 'test'");
}

py::array_t<std::int64_t> edge_array(const craft::Dataset& d) {
  py::array_t<std::int64_t> out({static_cast<py::ssize_t>(d.edges.size()), py::ssize_t{3}});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < d.edges.size(); ++i) {
    view(i, 0) = static_cast<std::int64_t>(d.edges[i].src);
    view(i, 1) = static_cast<std::int64_t>(d.edges[i].dst);
    view(i, 2) = d.edges[i].t;
  }
  return out;
}

/// A trained model restored from a checkpoint, in either precision.
class LoadedModel {
 public:
  explicit LoadedModel(const std::filesystem::path& path) {
    const craft::CheckpointInfo header = craft::read_checkpoint_info(path);
    if (header.dtype == "float64") {
      double_ = std::make_unique<craft::CraftModel<double>>(craft::load_checkpoint<double>(path, &info_));
    } else {
      float_ = std::make_unique<craft::CraftModel<float>>(craft::load_checkpoint<float>(path, &info_));
    }
  }

  /// Scores candidate lists; column 0 of each row is treated as the positive.
  py::array_t<double> score(const craft::NeighborIndex& index, const std::vector<craft::NodeId>& sources,
                            const std::vector<craft::Timestamp>& times,
                            const std::vector<std::vector<craft::NodeId>>& candidates) {
    if (sources.size() != times.size() || sources.size() != candidates.size()) {
      throw std::invalid_argument("sources, times and candidates must have the same length");
    }
    std::vector<craft::RankingQuery> queries;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (candidates[i].empty() || candidates[i].size() != candidates[0].size()) {
        throw std::invalid_argument("every candidate list needs the same non-zero length");
      }
      queries.push_back({sources[i], times[i], candidates[i][0],
                         {candidates[i].begin() + 1, candidates[i].end()}, craft::Phase::kTest});
    }
    const auto& mc = info_.model;
    const craft::QueryBatch batch = craft::assemble_batch(index, queries, mc.k, mc.use_repeat);
    const std::vector<double> scores = double_ ? double_->score(batch) : float_->score(batch);
    py::array_t<double> out({static_cast<py::ssize_t>(sources.size()),
                             static_cast<py::ssize_t>(candidates.empty() ? 0 : candidates[0].size())});
    std::copy(scores.begin(), scores.end(), out.mutable_data());
    return out;
  }

  const craft::CheckpointInfo& info() const { return info_; }

 private:
  craft::CheckpointInfo info_;
  std::unique_ptr<craft::CraftModel<float>> float_;
  std::unique_ptr<craft::CraftModel<double>> double_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal link prediction with cross-attention over recent neighbors";

  py::register_exception<craft::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<craft::ColdSourceError>(m, "ColdSourceError", PyExc_ValueError);

  m.def("sha256_hex", [](const py::bytes& b) { return craft::sha256_hex(std::string(b)); });
  m.def("bpr_loss", &craft::bpr_loss, py::arg("positive"), py::arg("negative"));
  m.def("bce_loss", &craft::bce_loss, py::arg("positive"), py::arg("negative"));
  m.def(
      "rank_of_positive", [](const std::vector<double>& s) { return craft::rank_of_positive(s); },
      py::arg("scores"));
  m.def(
      "mean_reciprocal_rank", [](const std::vector<std::size_t>& r) { return craft::mean_reciprocal_rank(r); },
      py::arg("ranks"));

  py::class_<craft::Dataset>(m, "Dataset")
      .def_static(
          "ingest",
          [](const std::filesystem::path& edges, const std::optional<std::filesystem::path>& meta) {
            return craft::ingest_edge_file(edges, meta.value_or(std::filesystem::path{}));
          },
          py::arg("edges"), py::arg("meta") = py::none())
      .def_static("load", &craft::load_bundle, py::arg("bundle"))
      .def("save", [](const craft::Dataset& d, const std::filesystem::path& dir) { craft::write_bundle(d, dir); })
      .def_property_readonly("num_nodes", [](const craft::Dataset& d) { return d.meta.num_nodes; })
      .def_property_readonly("num_edges", [](const craft::Dataset& d) { return d.edges.size(); })
      .def_property_readonly("bipartite", [](const craft::Dataset& d) { return d.meta.bipartite; })
      .def_readonly("checksum", &craft::Dataset::checksum)
      .def_readonly("original_ids", &craft::Dataset::original_ids)
      .def_property_readonly("edges", &edge_array);

  py::class_<craft::NeighborIndex>(m, "NeighborIndex")
      .def(py::init([](const craft::Dataset& d) { return craft::NeighborIndex::build(d.edges, d.meta); }),
           py::arg("dataset"))
      .def(
          "recent_neighbors",
          [](const craft::NeighborIndex& ix, craft::NodeId node, craft::Timestamp t, std::size_t k) {
            std::vector<std::pair<craft::NodeId, craft::Timestamp>> out;
            for (const auto& e : ix.recent_neighbors(node, t, k)) out.emplace_back(e.peer, e.t);
            return out;
          },
          py::arg("node"), py::arg("t"), py::arg("k"))
      .def("last_activity", &craft::NeighborIndex::last_activity, py::arg("node"), py::arg("t"))
      .def("repeat_count", &craft::NeighborIndex::repeat_count, py::arg("source"), py::arg("destination"),
           py::arg("t"))
      .def_property_readonly("num_nodes", &craft::NeighborIndex::num_nodes)
      .def_property_readonly("num_edges", &craft::NeighborIndex::num_edges);

  m.def(
      "split_boundaries",
      [](std::size_t m_edges, double train, double val, double test) {
        const auto b = craft::split_boundaries(m_edges, {train, val, test});
        return py::make_tuple(b.train_end, b.val_end, b.total);
      },
      py::arg("num_edges"), py::arg("train") = 0.70, py::arg("val") = 0.15, py::arg("test") = 0.15);

  m.def(
      "default_config", [] { return to_python(craft::RunConfig{}.to_json()); },
      "Default run configuration as a dict.");

  m.def(
      "train",
      [](const py::object& config, const std::filesystem::path& dataset, std::uint64_t seed,
         const std::optional<std::filesystem::path>& out) {
        craft::RunConfig cfg = craft::RunConfig::from_json(to_json(config));
        cfg.dataset = dataset;
        cfg.seed = seed;
        craft::TrainArtifacts artifacts;
        if (out) {
          std::filesystem::create_directories(*out);
          cfg.out = *out;
          artifacts = {*out / "checkpoint.ckpt", *out / "metrics.jsonl", *out / "timing.jsonl"};
        }
        craft::RunResult r;
        {
          py::gil_scoped_release release;
          const auto prepared = craft::prepare_data(craft::load_bundle(dataset), cfg.split, seed, cfg.q_eval);
          r = craft::run_training(prepared, cfg, artifacts);
        }
        json report = {{"val", r.val.to_json()}, {"test", r.test.to_json()}, {"best_epoch", r.fit.best_epoch},
                       {"epochs", r.fit.history.size()}};
        return to_python(report);
      },
      py::arg("config"), py::arg("dataset"), py::arg("seed"), py::arg("out") = py::none(),
      "Trains on a bundle and returns validation and test reports.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, std::uint64_t seed,
         const std::string& split, std::size_t q, bool edgebank) {
        const craft::CheckpointInfo info = craft::read_checkpoint_info(checkpoint);
        const craft::RunConfig trained = craft::RunConfig::from_json(info.config);
        craft::EvalReport r;
        {
          py::gil_scoped_release release;
          const auto prepared = craft::prepare_data(craft::load_bundle(dataset), trained.split, seed, q);
          r = edgebank ? craft::evaluate_edgebank(prepared, phase_from(split), trained.eval_batch_size)
                       : craft::evaluate_checkpoint(checkpoint, prepared, phase_from(split),
                                                    trained.eval_batch_size);
        }
        r.seed = seed;
        return to_python(r.to_json());
      },
      py::arg("checkpoint"), py::arg("dataset"), py::arg("seed"), py::arg("split") = "test", py::arg("q") = 100,
      py::arg("edgebank") = false);

  m.def(
      "bench",
      [](const std::vector<std::size_t>& degrees, const std::vector<std::size_t>& ks,
         const std::vector<std::size_t>& qs, std::size_t repeats, std::uint64_t seed, bool baseline) {
        craft::BenchGrid grid;
        grid.degrees = degrees;
        grid.ks = ks;
        grid.qs = qs;
        grid.repeats = repeats;
        grid.seed = seed;
        grid.per_candidate_baseline = baseline;
        std::vector<craft::BenchRow> rows;
        {
          py::gil_scoped_release release;
          rows = craft::bench_complexity(grid);
        }
        py::list out;
        for (const auto& r : rows) {
          out.append(py::dict(py::arg("knob") = r.knob, py::arg("value") = r.value, py::arg("mean_ns") = r.mean_ns,
                              py::arg("p50_ns") = r.p50_ns, py::arg("p95_ns") = r.p95_ns,
                              py::arg("repeats") = r.repeats));
        }
        return out;
      },
      py::arg("degrees") = std::vector<std::size_t>{}, py::arg("ks") = std::vector<std::size_t>{},
      py::arg("qs") = std::vector<std::size_t>{}, py::arg("repeats") = 5, py::arg("seed") = 0,
      py::arg("baseline") = false);

  py::class_<LoadedModel>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("score", &LoadedModel::score, py::arg("index"), py::arg("sources"), py::arg("times"),
           py::arg("candidates"))
      .def_property_readonly("fingerprint", [](const LoadedModel& m) { return m.info().fingerprint; })
      .def_property_readonly("dtype", [](const LoadedModel& m) { return m.info().dtype; })
      .def_property_readonly("epoch", [](const LoadedModel& m) { return m.info().epoch; })
      .def_property_readonly("config", [](const LoadedModel& m) { return to_python(m.info().config); });
}
