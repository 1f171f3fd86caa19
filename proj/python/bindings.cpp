// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: blueprint round-trips, shape and
// parameter queries, the scale/weight formulas, synthetic data, the full
// transform, and desk-scale training.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "xcnn/data.hpp"
#include "xcnn/engine.hpp"
#include "xcnn/experiment.hpp"
#include "xcnn/iterative.hpp"
#include "xcnn/transform.hpp"

namespace py = pybind11;
using namespace xcnn;

namespace {

LabeledDataset dataset_from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast>
                                      images,
                                  const std::vector<int>& labels, int class_count) {
    if (images.ndim() != 4)
        throw config_error("images must be a (n, h, w, c) float array");
    LabeledDataset d;
    d.images.shape = {static_cast<int>(images.shape(0)), static_cast<int>(images.shape(1)),
                      static_cast<int>(images.shape(2)), static_cast<int>(images.shape(3))};
    d.images.data.assign(images.data(), images.data() + images.size());
    if (static_cast<int>(labels.size()) != d.images.shape[0])
        throw config_error("labels length must match images");
    d.labels = std::make_shared<std::vector<int>>(labels);
    d.class_count = class_count;
    return d;
}

py::array_t<float> numpy_from_tensor(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

std::vector<ModalitySpec> specs_from_pairs(
    const std::vector<std::pair<std::string, std::vector<int>>>& raw) {
    std::vector<ModalitySpec> specs;
    for (const auto& [name, channels] : raw) specs.push_back({name, channels});
    return specs;
}

TransformConfig transform_config(double alpha, double beta, int probe_epochs,
                                 double internal_split, double drop_threshold, int probe_seeds,
                                 uint64_t seed, double learning_rate, int batch_size) {
    TransformConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.probe_epochs = probe_epochs;
    cfg.internal_split = internal_split;
    cfg.drop_threshold = drop_threshold;
    cfg.probe_seeds = probe_seeds;
    cfg.seed = seed;
    cfg.probe_train.learning_rate = learning_rate;
    cfg.probe_train.batch_size = batch_size;
    return cfg;
}

InformativenessReport report_from_scores(const std::map<std::string, double>& scores,
                                         int class_count) {
    InformativenessReport report;
    report.scores = scores;
    report.class_count = class_count;
    return report;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cross-modal CNN topology compiler (C++ core)";

    py::register_exception<Error>(m, "XcnnError");

    m.def("validate_blueprint", [](const std::string& doc) {
        Blueprint b = parse_blueprint(doc);
        return serialize_blueprint(b);
    }, py::arg("document"),
        "Parse, validate and re-serialize a blueprint document (canonical form).");

    m.def("infer_shapes", [](const std::string& doc) {
        Blueprint b = parse_blueprint(doc);
        std::map<std::string, std::tuple<int, int, int>> out;
        for (const auto& [id, s] : infer_shapes(b)) out[id] = {s.h, s.w, s.c};
        return out;
    }, py::arg("document"));

    m.def("parameter_count", [](const std::string& doc) {
        return document_is_xblueprint(doc) ? parameter_count(parse_xblueprint(doc))
                                           : parameter_count(parse_blueprint(doc));
    }, py::arg("document"));

    m.def("find_insertion_points", [](const std::string& doc) {
        return find_insertion_points(parse_blueprint(doc));
    }, py::arg("document"));

    m.def("compute_scales",
          [](const std::map<std::string, double>& scores, double alpha, int class_count) {
              return compute_scales(report_from_scores(scores, class_count), alpha).scales;
          },
          py::arg("scores"), py::arg("alpha"), py::arg("class_count"));

    m.def("compute_connection_weights",
          [](const std::map<std::string, double>& scores, double beta, int class_count) {
              WeightMatrix wm =
                  compute_connection_weights(report_from_scores(scores, class_count), beta);
              std::map<std::pair<std::string, std::string>, double> out(wm.w.begin(),
                                                                        wm.w.end());
              return out;
          },
          py::arg("scores"), py::arg("beta"), py::arg("class_count"));

    m.def("synth_multimodal",
          [](int n, int classes, int height, int width, std::vector<double> strengths,
             double noise_sigma, uint64_t seed) {
              SynthConfig cfg;
              cfg.n = n;
              cfg.classes = classes;
              cfg.height = height;
              cfg.width = width;
              cfg.signal_strengths = std::move(strengths);
              cfg.noise_sigma = noise_sigma;
              SynthDataset sd = synth_multimodal(cfg, seed);
              std::vector<std::pair<std::string, std::vector<int>>> specs;
              for (const ModalitySpec& s : sd.specs)
                  specs.emplace_back(s.name, s.channel_indices);
              return py::make_tuple(numpy_from_tensor(sd.data.images), *sd.data.labels, specs);
          },
          py::arg("n"), py::arg("classes") = 10, py::arg("height") = 8, py::arg("width") = 8,
          py::arg("strengths") = std::vector<double>{1.0, 0.3, 0.0},
          py::arg("noise_sigma") = 1.0, py::arg("seed") = 0,
          "Generate the synthetic multimodal dataset; returns (images, labels, specs).");

    m.def("measure_informativeness",
          [](const std::string& blueprint_doc,
             py::array_t<float, py::array::c_style | py::array::forcecast> images,
             const std::vector<int>& labels, int class_count,
             const std::vector<std::pair<std::string, std::vector<int>>>& specs, double alpha,
             double beta, int probe_epochs, double internal_split, double drop_threshold,
             int probe_seeds, uint64_t seed, double learning_rate, int batch_size) {
              Blueprint b = parse_blueprint(blueprint_doc);
              LabeledDataset d = dataset_from_numpy(images, labels, class_count);
              ModalViews views = split_modalities(d, specs_from_pairs(specs));
              TransformConfig cfg =
                  transform_config(alpha, beta, probe_epochs, internal_split, drop_threshold,
                                   probe_seeds, seed, learning_rate, batch_size);
              return measure_informativeness(b, views, cfg).scores;
          },
          py::arg("blueprint"), py::arg("images"), py::arg("labels"), py::arg("class_count"),
          py::arg("specs"), py::arg("alpha") = 1.0, py::arg("beta") = 2.0,
          py::arg("probe_epochs") = 8, py::arg("internal_split") = 0.8,
          py::arg("drop_threshold") = 0.05, py::arg("probe_seeds") = 1, py::arg("seed") = 0,
          py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 32);

    m.def("transform",
          [](const std::string& blueprint_doc,
             py::array_t<float, py::array::c_style | py::array::forcecast> images,
             const std::vector<int>& labels, int class_count,
             const std::vector<std::pair<std::string, std::vector<int>>>& specs, double alpha,
             double beta, int probe_epochs, double internal_split, double drop_threshold,
             int probe_seeds, uint64_t seed, double learning_rate, int batch_size) {
              Blueprint b = parse_blueprint(blueprint_doc);
              LabeledDataset d = dataset_from_numpy(images, labels, class_count);
              ModalViews views = split_modalities(d, specs_from_pairs(specs));
              TransformConfig cfg =
                  transform_config(alpha, beta, probe_epochs, internal_split, drop_threshold,
                                   probe_seeds, seed, learning_rate, batch_size);
              TransformResult res = transform(b, views, cfg);
              return py::make_tuple(serialize_blueprint(res.xblueprint),
                                    transform_report_json(res));
          },
          py::arg("blueprint"), py::arg("images"), py::arg("labels"), py::arg("class_count"),
          py::arg("specs"), py::arg("alpha") = 1.0, py::arg("beta") = 2.0,
          py::arg("probe_epochs") = 8, py::arg("internal_split") = 0.8,
          py::arg("drop_threshold") = 0.05, py::arg("probe_seeds") = 1, py::arg("seed") = 0,
          py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 32,
          "Run the full transform; returns (xblueprint_json, report_json).");

    m.def("train_and_evaluate",
          [](const std::string& model_doc,
             py::array_t<float, py::array::c_style | py::array::forcecast> images,
             const std::vector<int>& labels, int class_count,
             const std::vector<std::pair<std::string, std::vector<int>>>& specs, int epochs,
             double learning_rate, int batch_size, double internal_split, uint64_t seed) {
              LabeledDataset d = dataset_from_numpy(images, labels, class_count);
              TrainConfig tc;
              tc.epochs = epochs;
              tc.learning_rate = learning_rate;
              tc.batch_size = batch_size;
              tc.seed = mix_seed(seed, "final-train");

              Batchset<float> train_set, val_set;
              ExecutableModel<float> model;
              if (document_is_xblueprint(model_doc)) {
                  XBlueprint x = parse_xblueprint(model_doc);
                  ModalViews views = split_modalities(d, specs_from_pairs(specs));
                  SplitViews split =
                      train_val_split(views, internal_split, mix_seed(seed, "final-split"));
                  train_set = to_batchset(split.train);
                  val_set = to_batchset(split.val);
                  model = compile<float>(x, mix_seed(seed, "final-init"));
              } else {
                  Blueprint b = parse_blueprint(model_doc);
                  SplitDataset split =
                      train_val_split(d, internal_split, mix_seed(seed, "final-split"));
                  train_set = to_batchset(split.train);
                  val_set = to_batchset(split.val);
                  model = compile<float>(b, mix_seed(seed, "final-init"));
              }
              History h = train(model, train_set, &val_set, tc);
              py::list history;
              for (const EpochStats& e : h) {
                  py::dict row;
                  row["epoch"] = e.epoch;
                  row["train_loss"] = e.train_loss;
                  row["val_accuracy"] = e.val_accuracy;
                  history.append(row);
              }
              return py::make_tuple(evaluate(model, val_set), history);
          },
          py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("class_count"),
          py::arg("specs"), py::arg("epochs") = 10, py::arg("learning_rate") = 1e-3,
          py::arg("batch_size") = 32, py::arg("internal_split") = 0.8, py::arg("seed") = 0,
          "Train a blueprint/xblueprint document on (images, labels); returns "
          "(val_accuracy, history).");

    m.def("iterate",
          [](const std::string& blueprint_doc,
             py::array_t<float, py::array::c_style | py::array::forcecast> images,
             const std::vector<int>& labels, int class_count,
             const std::vector<std::pair<std::string, std::vector<int>>>& specs,
             const std::string& run_dir, int generations, int epochs_per_gen,
             int pretrain_epochs, uint64_t seed, bool resume) {
              Blueprint b = parse_blueprint(blueprint_doc);
              LabeledDataset d = dataset_from_numpy(images, labels, class_count);
              ModalViews views = split_modalities(d, specs_from_pairs(specs));
              TransformConfig tcfg;
              tcfg.seed = seed;
              IterConfig icfg;
              icfg.generations = generations;
              icfg.epochs_per_gen = epochs_per_gen;
              icfg.pretrain_epochs = pretrain_epochs;
              icfg.seed = seed;
              IterateResult res = iterate(b, views, tcfg, icfg, run_dir, resume);
              py::list traj;
              for (const GenerationRecord& rec : res.trajectory) {
                  py::dict row;
                  row["index"] = rec.index;
                  row["val_accuracy"] = rec.val_accuracy;
                  std::map<std::pair<std::string, std::string>, double> w(rec.weights.w.begin(),
                                                                          rec.weights.w.end());
                  row["weights"] = w;
                  traj.append(row);
              }
              return py::make_tuple(res.best_index, serialize_blueprint(res.best_topology),
                                    traj);
          },
          py::arg("blueprint"), py::arg("images"), py::arg("labels"), py::arg("class_count"),
          py::arg("specs"), py::arg("run_dir"), py::arg("generations") = 4,
          py::arg("epochs_per_gen") = 2, py::arg("pretrain_epochs") = 2, py::arg("seed") = 0,
          py::arg("resume") = false,
          "Run combined learning; returns (best_index, best_xblueprint_json, trajectory).");
}
