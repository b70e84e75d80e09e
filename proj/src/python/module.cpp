// Python bindings for the band-selection core: synthetic data, the patch
// classifier, the three explainers, faithfulness curves, selection, and KDE.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "hsiband/errors.hpp"
#include "hsiband/explain.hpp"
#include "hsiband/faithfulness.hpp"
#include "hsiband/kde.hpp"
#include "hsiband/pipeline.hpp"
#include "hsiband/selection.hpp"

namespace py = pybind11;
using namespace hsiband;

namespace {

Patch patch_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                       int label) {
    if (arr.ndim() != 3)
        throw py::value_error("patch must be a (height, width, bands) array");
    Patch p;
    p.height = static_cast<int>(arr.shape(0));
    p.width = static_cast<int>(arr.shape(1));
    p.bands = static_cast<int>(arr.shape(2));
    p.label = label;
    p.values.assign(arr.data(), arr.data() + arr.size());
    return p;
}

py::array_t<double> vector_to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// A trained model plus the band stats and split it was trained with.
struct PyModel {
    Network net;
    PatchSplit split;
    double test_accuracy = 0.0;
};

PyModel train_on_cube(
    py::array_t<float, py::array::c_style | py::array::forcecast> cube_arr,
    py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> labels_arr,
    const std::vector<double>& wavelengths_um, int patch_size,
    const std::string& preset, int epochs, int batch_size, double learning_rate,
    const std::string& optimizer, double train_fraction, std::uint64_t seed) {
    if (cube_arr.ndim() != 3)
        throw py::value_error("cube must be a (height, width, bands) array");
    if (labels_arr.ndim() != 2)
        throw py::value_error("labels must be a (height, width) array");

    HyperCube cube;
    cube.height = static_cast<int>(cube_arr.shape(0));
    cube.width = static_cast<int>(cube_arr.shape(1));
    cube.bands = static_cast<int>(cube_arr.shape(2));
    cube.wavelengths_um = wavelengths_um;
    cube.data.assign(cube_arr.data(), cube_arr.data() + cube_arr.size());
    validate_cube(cube);

    GroundTruth gt;
    gt.height = static_cast<int>(labels_arr.shape(0));
    gt.width = static_cast<int>(labels_arr.shape(1));
    gt.labels.assign(labels_arr.data(), labels_arr.data() + labels_arr.size());
    int cmax = 0;
    for (auto v : gt.labels) cmax = std::max(cmax, int(v));
    if (cmax == 0) throw py::value_error("label raster has no labeled pixels");
    gt.class_count = cmax;

    const PatchSet ps = extract_patches(cube, gt, patch_size, patch_size);
    SplitSpec sp;
    sp.train_fraction = train_fraction;
    sp.seed = seed;
    PyModel model;
    model.split = split_patches(ps, sp);

    NetworkSpec spec =
        preset_spec(preset, patch_size, patch_size, cube.bands, gt.class_count, seed);
    Network net = init_network(spec);
    net.standardizer = compute_band_stats(model.split.train);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    cfg.optimizer = optimizer;
    cfg.seed = seed;
    model.net = train(net, model.split.train, cfg).network;
    model.test_accuracy = evaluate_accuracy(model.net, model.split.test_accuracy);
    return model;
}

void register_exceptions(py::module_& m) {
    static py::exception<ConfigError> config_exc(m, "ConfigError");
    static py::exception<DataError> data_exc(m, "DataError");
    static py::exception<NumericalError> numerical_exc(m, "NumericalError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(config_exc.ptr(), e.what());
        } catch (const DataError& e) {
            PyErr_SetString(data_exc.ptr(), e.what());
        } catch (const NumericalError& e) {
            PyErr_SetString(numerical_exc.ptr(), e.what());
        }
    });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Explainability-driven hyperspectral band selection core";
    register_exceptions(m);

    m.def(
        "generate_synthetic",
        [](int height, int width, int bands, int classes,
           const std::vector<int>& informative_bands, double snr,
           double labeled_fraction, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.height = height;
            spec.width = width;
            spec.bands = bands;
            spec.class_count = classes;
            spec.informative_bands = informative_bands;
            spec.snr = snr;
            spec.labeled_fraction = labeled_fraction;
            spec.seed = seed;
            auto [cube, gt] = generate_synthetic_cube(spec);

            py::array_t<float> cube_arr({height, width, bands});
            std::copy(cube.data.begin(), cube.data.end(), cube_arr.mutable_data());
            py::array_t<std::uint16_t> labels_arr({height, width});
            std::copy(gt.labels.begin(), gt.labels.end(), labels_arr.mutable_data());
            return py::make_tuple(cube_arr, labels_arr,
                                  vector_to_array(cube.wavelengths_um));
        },
        py::arg("height"), py::arg("width"), py::arg("bands"), py::arg("classes"),
        py::arg("informative_bands"), py::arg("snr") = 3.0,
        py::arg("labeled_fraction") = 0.7, py::arg("seed") = 0,
        "Synthetic labeled cube: returns (cube, labels, wavelengths_um).");

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("bands",
                               [](const PyModel& s) { return s.net.spec.bands; })
        .def_property_readonly(
            "classes", [](const PyModel& s) { return s.net.spec.class_count; })
        .def_property_readonly("test_accuracy",
                               [](const PyModel& s) { return s.test_accuracy; })
        .def_property_readonly(
            "band_mean", [](const PyModel& s) {
                return vector_to_array(s.net.standardizer.mean);
            })
        .def(
            "predict",
            [](const PyModel& s, py::array_t<float> patch) {
                return predict(s.net, patch_from_array(patch, 1));
            },
            py::arg("patch"), "Predicted class label (1-based).")
        .def(
            "confidence",
            [](const PyModel& s, py::array_t<float> patch) {
                return vector_to_array(
                    forward(s.net, patch_from_array(patch, 1)).confidence);
            },
            py::arg("patch"), "Softmax confidence vector.")
        .def(
            "explain_patch",
            [](const PyModel& s, std::size_t index) {
                if (index >= s.split.test_explain.size())
                    throw py::index_error("explanation patch index out of range");
                const Patch& p = s.split.test_explain.patches[index];
                py::array_t<float> arr({p.height, p.width, p.bands});
                std::copy(p.values.begin(), p.values.end(), arr.mutable_data());
                return py::make_tuple(arr, p.label);
            },
            py::arg("index"), "One held-out explanation patch: (array, label).")
        .def_property_readonly("explain_count", [](const PyModel& s) {
            return s.split.test_explain.size();
        });

    m.def("train", &train_on_cube, py::arg("cube"), py::arg("labels"),
          py::arg("wavelengths_um"), py::arg("patch_size") = 3,
          py::arg("preset") = "shallow", py::arg("epochs") = 15,
          py::arg("batch_size") = 64, py::arg("learning_rate") = 2e-3,
          py::arg("optimizer") = "adam", py::arg("train_fraction") = 0.3,
          py::arg("seed") = 0,
          "Train the patch classifier on a labeled cube; returns a Model.");

    m.def(
        "lrp",
        [](const PyModel& s, py::array_t<float> patch, int target, double epsilon,
           double gamma) {
            LrpConfig cfg;
            cfg.epsilon = epsilon;
            cfg.gamma = gamma;
            const Patch p = patch_from_array(patch, target);
            const auto map = lrp_explain(s.net, p, target, cfg);
            py::array_t<double> arr({map.height, map.width, map.bands});
            std::copy(map.values.begin(), map.values.end(), arr.mutable_data());
            return arr;
        },
        py::arg("model"), py::arg("patch"), py::arg("target"),
        py::arg("epsilon") = 1e-6, py::arg("gamma") = 0.25,
        "Layer-wise relevance propagation map, shape (h, w, bands).");

    m.def(
        "band_relevance",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> map_arr) {
            if (map_arr.ndim() != 3)
                throw py::value_error("relevance map must be 3-d");
            RelevanceMap map;
            map.height = static_cast<int>(map_arr.shape(0));
            map.width = static_cast<int>(map_arr.shape(1));
            map.bands = static_cast<int>(map_arr.shape(2));
            map.values.assign(map_arr.data(), map_arr.data() + map_arr.size());
            return vector_to_array(aggregate_band_relevance(map).scores);
        },
        py::arg("relevance_map"),
        "Per-band positive-part aggregation of a relevance map.");

    m.def(
        "shap",
        [](const PyModel& s, py::array_t<float> patch, int target, int subset_samples,
           std::uint64_t seed) {
            ShapConfig cfg;
            cfg.subset_samples = subset_samples;
            cfg.seed = seed;
            const Patch p = patch_from_array(patch, target);
            return vector_to_array(
                shap_explain(s.net, p, target, s.net.standardizer, cfg).scores);
        },
        py::arg("model"), py::arg("patch"), py::arg("target"),
        py::arg("subset_samples") = 30, py::arg("seed") = 0,
        "Sampling-based per-band attribution with train-mean fill.");

    m.def(
        "exact_shapley",
        [](const PyModel& s, py::array_t<float> patch, int target) {
            const Patch p = patch_from_array(patch, target);
            return vector_to_array(
                exact_shapley(s.net, p, target, s.net.standardizer).scores);
        },
        py::arg("model"), py::arg("patch"), py::arg("target"),
        "Exhaustive Shapley values (bands <= 15).");

    m.def(
        "rise",
        [](const PyModel& s, py::array_t<float> patch, int target, int mask_count,
           double density, std::uint64_t seed) {
            RiseConfig cfg;
            cfg.mask_count = mask_count;
            cfg.density = density;
            cfg.seed = seed;
            const Patch p = patch_from_array(patch, target);
            return vector_to_array(rise_explain(s.net, p, target, cfg).scores);
        },
        py::arg("model"), py::arg("patch"), py::arg("target"),
        py::arg("mask_count") = 5000, py::arg("density") = 0.5, py::arg("seed") = 0,
        "Random spectral masking attribution with zero fill.");

    m.def(
        "deletion_curve",
        [](const PyModel& s, py::array_t<float> patch, int label,
           const std::vector<int>& order, double step) {
            BandRanking ranking;
            ranking.order = order;
            const Patch p = patch_from_array(patch, label);
            const auto c =
                deletion_curve(s.net, p, ranking, s.net.standardizer, step);
            return py::make_tuple(vector_to_array(c.fractions),
                                  vector_to_array(c.confidences), c.auc);
        },
        py::arg("model"), py::arg("patch"), py::arg("label"), py::arg("order"),
        py::arg("step") = 0.2,
        "Mean-fill deletion curve: (fractions, confidences, auc).");

    m.def(
        "insertion_curve",
        [](const PyModel& s, py::array_t<float> patch, int label,
           const std::vector<int>& order, double step) {
            BandRanking ranking;
            ranking.order = order;
            const Patch p = patch_from_array(patch, label);
            const auto c = insertion_curve(s.net, p, ranking, step);
            return py::make_tuple(vector_to_array(c.fractions),
                                  vector_to_array(c.confidences), c.auc);
        },
        py::arg("model"), py::arg("patch"), py::arg("label"), py::arg("order"),
        py::arg("step") = 0.2,
        "Zero-start insertion curve: (fractions, confidences, auc).");

    m.def(
        "average_drop",
        [](const PyModel& s, py::array_t<float> patch, int label,
           const std::vector<double>& scores) {
            BandRelevance rel;
            rel.scores = scores;
            return average_drop(s.net, patch_from_array(patch, label), rel);
        },
        py::arg("model"), py::arg("patch"), py::arg("label"), py::arg("scores"),
        "Confidence drop (percent) under relevance-weighted attenuation.");

    m.def(
        "rank_bands",
        [](const std::vector<double>& scores) {
            BandRelevance rel;
            rel.scores = scores;
            return rank_bands(rel).order;
        },
        py::arg("scores"), "Band indices sorted most to least relevant.");

    m.def(
        "select_top_k",
        [](const std::vector<double>& scores, int k,
           const std::vector<double>& wavelengths_um) {
            InfluenceScores inf;
            inf.scores = scores;
            const auto subset = select_top_k(inf, k, wavelengths_um);
            return py::make_tuple(subset.indices,
                                  vector_to_array(subset.wavelengths_um));
        },
        py::arg("scores"), py::arg("k"), py::arg("wavelengths_um"),
        "Top-k bands by score: (indices, wavelengths_um), indices ascending.");

    m.def("scott_bandwidth",
          py::overload_cast<const std::vector<double>&>(&scott_bandwidth),
          py::arg("samples"), "Scott's-rule bandwidth from samples.");
    m.def("scott_bandwidth_from_sigma", &scott_bandwidth_from_sigma, py::arg("sigma"),
          py::arg("n"), "Scott's-rule bandwidth from a known sigma.");

    m.def(
        "kde",
        [](const std::vector<double>& samples, py::object grid) {
            std::vector<double> g;
            if (grid.is_none())
                g = default_kde_grid(samples);
            else
                g = grid.cast<std::vector<double>>();
            const auto curve = kde_eval(samples, g);
            return py::make_tuple(vector_to_array(curve.grid),
                                  vector_to_array(curve.density), curve.bandwidth);
        },
        py::arg("samples"), py::arg("grid") = py::none(),
        "Gaussian KDE: (grid, density, bandwidth).");

    m.def(
        "run_stage",
        [](const std::string& stage, const std::string& config_path) {
            const auto cfg = load_pipeline_config(config_path);
            if (stage == "synth")
                run_synth(cfg);
            else if (stage == "train")
                run_train(cfg);
            else if (stage == "explain")
                run_explain(cfg);
            else if (stage == "evaluate")
                run_evaluate(cfg);
            else if (stage == "select")
                run_select(cfg);
            else if (stage == "kde")
                run_kde(cfg);
            else if (stage == "report")
                run_report(cfg);
            else
                throw py::value_error("unknown stage: " + stage);
        },
        py::arg("stage"), py::arg("config_path"),
        "Run one pipeline stage against a config file.");
}
