// Python surface: thin wrappers over the C++ toolkit. Configs cross the
// boundary as JSON strings so python callers work with plain dicts on their
// side; heavy calls drop the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "pathgrade/eval.hpp"
#include "pathgrade/explain.hpp"
#include "pathgrade/kg.hpp"
#include "pathgrade/model.hpp"
#include "pathgrade/rng.hpp"
#include "pathgrade/sampler.hpp"
#include "pathgrade/synth.hpp"
#include "pathgrade/train.hpp"

namespace py = pybind11;
using namespace pathgrade;
using nlohmann::json;

namespace {

// Owns the sample vector so python holds datasets as one opaque object.
struct DatasetHandle {
    std::vector<PairSample> samples;
};

json parse_config(const std::string& text, const char* what) {
    try {
        return text.empty() ? json::object() : json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

const PairSample& sample_at(const DatasetHandle& d, std::size_t i) {
    if (i >= d.samples.size()) throw py::index_error("sample index out of range");
    return d.samples[i];
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "knowledge-graph path-evidence pass/fail prediction toolkit";
    m.attr("__version__") = "0.1.0";

    py::class_<KnowledgeGraph>(m, "Graph")
        .def_static(
            "load",
            [](const std::string& path) {
                py::gil_scoped_release rel;
                return KnowledgeGraph::build(load_triples(path));
            },
            py::arg("path"))
        .def(
            "save", [](const KnowledgeGraph& g, const std::string& path) { save_triples(g, path); },
            py::arg("path"))
        .def("summary", &KnowledgeGraph::summary)
        .def("n_entities", &KnowledgeGraph::n_entities)
        .def("n_students",
             [](const KnowledgeGraph& g) {
                 return static_cast<int>(g.ids_of(EntityKind::Student).size());
             })
        .def("n_courses", [](const KnowledgeGraph& g) {
            return static_cast<int>(g.ids_of(EntityKind::Course).size());
        });

    py::class_<DatasetHandle>(m, "Dataset")
        .def_static(
            "load",
            [](const std::string& path) {
                py::gil_scoped_release rel;
                return DatasetHandle{load_dataset(path)};
            },
            py::arg("path"))
        .def(
            "save",
            [](const DatasetHandle& d, const KnowledgeGraph& g, const std::string& path) {
                py::gil_scoped_release rel;
                save_dataset(d.samples, g, path);
            },
            py::arg("graph"), py::arg("path"))
        .def("__len__", [](const DatasetHandle& d) { return d.samples.size(); })
        .def("labels",
             [](const DatasetHandle& d) {
                 std::vector<int> out;
                 out.reserve(d.samples.size());
                 for (const PairSample& s : d.samples) out.push_back(s.label);
                 return out;
             })
        .def(
            "pair",
            [](const DatasetHandle& d, std::size_t i, const KnowledgeGraph& g) {
                const PairSample& s = sample_at(d, i);
                return py::make_tuple(g.entity(s.student).value, g.entity(s.course).value);
            },
            py::arg("index"), py::arg("graph"));

    py::class_<Model>(m, "Model")
        .def(py::init([](const KnowledgeGraph& g, const std::string& config_json,
                         std::uint64_t seed) {
                 Model model(ModelConfig::from_json(parse_config(config_json, "model config")), g);
                 Rng rng(seed);
                 init_params(model, rng);
                 return model;
             }),
             py::arg("graph"), py::arg("config") = "", py::arg("seed") = 1,
             py::keep_alive<1, 2>())
        .def_static(
            "load",
            [](const std::string& path, const KnowledgeGraph& g) { return Model::load(path, g); },
            py::arg("path"), py::arg("graph"), py::keep_alive<0, 2>())
        .def(
            "save", [](const Model& model, const std::string& path) { model.save(path); },
            py::arg("path"))
        .def("config", [](const Model& model) { return model.config().to_json().dump(); })
        .def(
            "scores",
            [](const Model& model, const DatasetHandle& d) {
                py::gil_scoped_release rel;
                return model.score_all(d.samples);
            },
            py::arg("dataset"))
        .def(
            "score",
            [](const Model& model, const DatasetHandle& d, std::size_t i) {
                return model.predict_score(sample_at(d, i));
            },
            py::arg("dataset"), py::arg("index"));

    m.def(
        "generate",
        [](const std::string& config_json) {
            const SynthConfig cfg = SynthConfig::from_json(parse_config(config_json, "synth config"));
            SynthResult res;
            {
                py::gil_scoped_release rel;
                res = generate(cfg);
            }
            return py::make_tuple(KnowledgeGraph::build(std::move(res.triples)), res.truth.dump());
        },
        py::arg("config") = "", "Generate a synthetic graph; returns (graph, truth_json).");

    m.def("null_signal_config", [] { return SynthConfig::null_signal().to_json().dump(); });
    m.def("default_synth_config", [] { return SynthConfig{}.to_json().dump(); });
    m.def("default_model_config", [] { return ModelConfig{}.to_json().dump(); });
    m.def("default_train_config", [] { return TrainConfig{}.to_json().dump(); });

    m.def(
        "build_dataset",
        [](const KnowledgeGraph& g, int split_term, int similar_limit, int path_cap) {
            DatasetBuild db;
            {
                py::gil_scoped_release rel;
                db = build_dataset(g, split_term, SamplerConfig{similar_limit, path_cap});
            }
            py::dict counts;
            counts["dropped_train"] = db.dropped_train;
            counts["dropped_test"] = db.dropped_test;
            counts["skipped_future"] = db.skipped_future;
            return py::make_tuple(DatasetHandle{std::move(db.train)},
                                  DatasetHandle{std::move(db.test)}, counts);
        },
        py::arg("graph"), py::arg("split_term"), py::arg("similar_limit") = 60,
        py::arg("path_cap") = 10,
        "Assemble (train, test, counts) from temporally split enrollments.");

    m.def(
        "train",
        [](Model& model, const DatasetHandle& data, const std::string& config_json) {
            const TrainConfig cfg =
                TrainConfig::from_json(parse_config(config_json, "train config"));
            TrainResult r;
            {
                py::gil_scoped_release rel;
                r = train(model, data.samples, cfg);
            }
            py::dict out;
            out["best_epoch"] = r.best_epoch;
            out["best_dev_auc"] = r.best_dev_auc;
            out["pos_weight"] = r.pos_weight;
            out["n_train"] = r.n_train;
            out["n_dev"] = r.n_dev;
            out["history_csv"] = r.history_csv();
            return out;
        },
        py::arg("model"), py::arg("dataset"), py::arg("config") = "",
        "Train in place; returns a summary dict.");

    m.def("auc", &auc, py::arg("scores"), py::arg("labels"));

    m.def(
        "classification_report",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return classification_report(scores, labels).to_json().dump();
        },
        py::arg("scores"), py::arg("labels"));

    m.def(
        "explain_report",
        [](const Model& model, const KnowledgeGraph& g, const DatasetHandle& d, std::size_t i) {
            return build_report(model, g, sample_at(d, i)).to_json().dump();
        },
        py::arg("model"), py::arg("graph"), py::arg("dataset"), py::arg("index"),
        "Attention evidence report for one pair, as a JSON string.");
}
