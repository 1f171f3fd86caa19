// SPDX-License-Identifier: Apache-2.0

#include "xcnn/transform.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include <nlohmann/json.hpp>

namespace xcnn {

using json = nlohmann::json;

void validate(const TransformConfig& cfg) {
    if (cfg.alpha <= 0.0) throw config_error("transform: alpha must be > 0");
    if (cfg.beta < 0.0) throw config_error("transform: beta must be >= 0");
    if (cfg.probe_epochs < 1) throw config_error("transform: probe_epochs must be >= 1");
    if (cfg.internal_split <= 0.0 || cfg.internal_split >= 1.0)
        throw config_error("transform: internal_split must be in (0, 1)");
    if (cfg.drop_threshold < 0.0 || cfg.drop_threshold >= 0.5)
        throw config_error("transform: drop_threshold must be in [0, 0.5)");
    if (cfg.probe_seeds < 1) throw config_error("transform: probe_seeds must be >= 1");
    if (cfg.parallel < 1) throw config_error("transform: parallel must be >= 1");
}

double InformativenessReport::floored(const std::string& modality) const {
    if (class_count < 2) throw config_error("informativeness report: class_count must be >= 2");
    return std::max(scores.at(modality), 1.0 / class_count);
}

Blueprint scale_probe(const Blueprint& b, int n_modalities, int in_channels) {
    if (n_modalities < 1) throw config_error("probe: n_modalities must be >= 1");
    const std::string boundary = resolve_classifier_boundary(b);
    std::map<std::string, Shape> shapes = infer_shapes(b);
    std::set<std::string> classifier;
    {
        Blueprint marked = b;
        marked.classifier_boundary = boundary;
        SplitBlueprint split = split_at_classifier(marked);
        for (const auto& [id, spec] : split.classifier.nodes) classifier.insert(id);
    }
    Blueprint probe = b;
    probe.input_shape.c = in_channels;
    const double scale = 1.0 / n_modalities;
    for (auto& [id, spec] : probe.nodes) {
        if (spec.kind == LayerKind::conv)
            spec.kernel_count = std::max(1, round_half_away(spec.kernel_count * scale));
        else if (spec.kind == LayerKind::dense && !classifier.count(id))
            spec.units = std::max(1, round_half_away(spec.units * scale));
    }
    validate(probe);
    return probe;
}

namespace {

struct ProbeOutcome {
    double best_val = 0.0;
    History history;
};

ProbeOutcome run_probe(const Blueprint& probe_bp, const LabeledDataset& train_view,
                       const LabeledDataset& val_view, const TransformConfig& cfg,
                       const std::string& modality, int seed_index) {
    ExecutableModel<float> model = compile<float>(
        probe_bp, mix_seed(cfg.seed, "probe-init/" + modality, seed_index));
    TrainConfig tc = cfg.probe_train;
    tc.epochs = cfg.probe_epochs;
    tc.seed = mix_seed(cfg.seed, "probe-train/" + modality, seed_index);
    Batchset<float> train_set = to_batchset(train_view);
    Batchset<float> val_set = to_batchset(val_view);
    History history;
    try {
        history = train(model, train_set, &val_set, tc);
    } catch (const Error& e) {
        if (e.kind() == Error::Kind::train)
            throw train_error("probe for modality \"" + modality + "\" diverged: " + e.what());
        throw;
    }
    ProbeOutcome out;
    out.history = history;
    for (const EpochStats& s : history) out.best_val = std::max(out.best_val, s.val_accuracy);
    return out;
}

}  // namespace

InformativenessReport measure_informativeness(const Blueprint& b, const ModalViews& modal_data,
                                              const TransformConfig& cfg) {
    validate(cfg);
    if (modal_data.size() < 2)
        throw config_error("informativeness: need at least 2 modalities, got " +
                           std::to_string(modal_data.size()));
    for (const auto& [name, view] : modal_data)
        if (view.size() == 0) throw data_error("informativeness: modality \"" + name +
                                               "\" has no samples");

    const int n_mod = static_cast<int>(modal_data.size());
    SplitViews split = train_val_split(modal_data, cfg.internal_split,
                                       mix_seed(cfg.seed, "internal-split"));

    struct Job {
        int modality_index;
        int seed_index;
    };
    std::vector<Job> jobs;
    for (int mi = 0; mi < n_mod; ++mi)
        for (int si = 0; si < cfg.probe_seeds; ++si) jobs.push_back({mi, si});

    std::vector<Blueprint> probes;
    for (int mi = 0; mi < n_mod; ++mi)
        probes.push_back(scale_probe(b, n_mod, modal_data[mi].second.channels()));

    std::vector<ProbeOutcome> outcomes(jobs.size());
    auto run_job = [&](size_t j) {
        const auto& [mi, si] = jobs[j];
        outcomes[j] = run_probe(probes[mi], split.train[mi].second, split.val[mi].second, cfg,
                                modal_data[mi].first, si);
    };
    if (cfg.parallel <= 1) {
        for (size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        for (size_t start = 0; start < jobs.size(); start += cfg.parallel) {
            std::vector<std::future<void>> batch;
            for (size_t j = start; j < std::min(jobs.size(), start + cfg.parallel); ++j)
                batch.push_back(std::async(std::launch::async, run_job, j));
            for (auto& f : batch) f.get();
        }
    }

    InformativenessReport report;
    report.class_count = modal_data.front().second.class_count;
    for (size_t j = 0; j < jobs.size(); ++j) {
        const std::string& name = modal_data[jobs[j].modality_index].first;
        report.scores[name] += outcomes[j].best_val / cfg.probe_seeds;
        if (jobs[j].seed_index == 0) report.probe_histories[name] = outcomes[j].history;
    }
    return report;
}

ScalePlan compute_scales(const InformativenessReport& report, double alpha) {
    if (alpha <= 0.0) throw config_error("compute_scales: alpha must be > 0");
    if (report.scores.empty()) throw config_error("compute_scales: empty report");
    ScalePlan plan;
    double denom = 0.0;
    for (const auto& [name, score] : report.scores) denom += std::pow(report.floored(name), alpha);
    for (const auto& [name, score] : report.scores)
        plan.scales[name] = std::pow(report.floored(name), alpha) / denom;
    return plan;
}

WeightMatrix compute_connection_weights(const InformativenessReport& report, double beta) {
    if (beta < 0.0) throw config_error("compute_connection_weights: beta must be >= 0");
    WeightMatrix wm;
    for (const auto& [src, s_src] : report.scores)
        for (const auto& [dst, s_dst] : report.scores) {
            if (src == dst) continue;
            const double a = std::pow(report.floored(src), beta);
            const double b = std::pow(report.floored(dst), beta);
            wm.set(src, dst, a / (a + b));
        }
    return wm;
}

std::map<std::string, Blueprint> build_superlayers(
    const Blueprint& extractor, const ScalePlan& plan,
    const std::vector<std::pair<std::string, int>>& modal_channels) {
    for (const auto& [name, channels] : modal_channels)
        if (!plan.scales.count(name))
            throw config_error("build_superlayers: no scale for modality \"" + name + "\"");
    std::map<std::string, Blueprint> supers;
    for (const auto& [name, channels] : modal_channels) {
        const double s = plan.scales.at(name);
        Blueprint frag;
        frag.input_shape = extractor.input_shape;
        frag.input_shape.c = channels;
        frag.output_id = name + "/" + extractor.output_id;
        for (const auto& [id, spec] : extractor.nodes) {
            LayerSpec copy = spec;
            copy.id = name + "/" + id;
            for (std::string& p : copy.predecessors) p = name + "/" + p;
            if (copy.kind == LayerKind::conv)
                copy.kernel_count = std::max(1, round_half_away(copy.kernel_count * s));
            else if (copy.kind == LayerKind::dense)
                copy.units = std::max(1, round_half_away(copy.units * s));
            frag.nodes.emplace(copy.id, std::move(copy));
        }
        validate(frag);
        supers.emplace(name, std::move(frag));
    }
    return supers;
}

std::vector<CrossConnection> place_connections(
    const std::map<std::string, Blueprint>& superlayers,
    const std::vector<std::string>& modality_order,
    const std::vector<std::string>& insertion_points, const WeightMatrix& weights,
    double drop_threshold) {
    if (insertion_points.empty())
        throw config_error("place_connections: no insertion points");
    std::map<std::string, std::map<std::string, Shape>> shapes;
    for (const std::string& m : modality_order) shapes[m] = infer_shapes(superlayers.at(m));

    std::vector<CrossConnection> conns;
    for (size_t d = 0; d < insertion_points.size(); ++d) {
        for (const std::string& src : modality_order)
            for (const std::string& dst : modality_order) {
                if (src == dst) continue;
                CrossConnection c;
                c.src_modality = src;
                c.dst_modality = dst;
                c.depth_index = static_cast<int>(d);
                c.weight = weights.at(src, dst);
                if (c.weight < drop_threshold) {
                    c.projection_channels = 0;  // dropped
                } else {
                    const int c_src = shapes.at(src).at(src + "/" + insertion_points[d]).c;
                    c.projection_channels = std::max(1, round_half_away(c.weight * c_src));
                }
                conns.push_back(std::move(c));
            }
    }
    return conns;
}

XBlueprint assemble_xcnn(std::map<std::string, Blueprint> superlayers,
                         std::vector<std::string> modality_order,
                         std::vector<std::string> insertion_points,
                         std::vector<CrossConnection> connections, Blueprint classifier) {
    XBlueprint x;
    x.modality_order = std::move(modality_order);
    x.superlayers = std::move(superlayers);
    x.insertion_points = std::move(insertion_points);
    x.connections = std::move(connections);
    x.classifier = std::move(classifier);

    // The shared classifier's true input is the concat of super-layer outputs.
    Shape concat{0, 0, 0};
    for (const std::string& m : x.modality_order) {
        const Blueprint& frag = x.superlayers.at(m);
        const Shape out = infer_shapes(frag).at(frag.output_id);
        if (concat.c == 0) {
            concat = out;
        } else {
            if (out.h != concat.h || out.w != concat.w)
                throw config_error("assemble: superlayer \"" + m +
                                   "\" output spatial dims differ from the first superlayer");
            concat.c += out.c;
        }
    }
    x.classifier.input_shape = concat;

    validate(x);
    return x;
}

TransformResult build_xcnn(const Blueprint& b, const InformativenessReport& report,
                           const std::vector<std::pair<std::string, int>>& modal_channels,
                           const TransformConfig& cfg) {
    validate(cfg);
    validate(b);
    TransformResult res;
    res.report = report;
    res.insertion_points = find_insertion_points(b);
    res.scales = compute_scales(report, cfg.alpha);
    res.weights = compute_connection_weights(report, cfg.beta);

    SplitBlueprint split = split_at_classifier(b);
    std::vector<std::string> order;
    for (const auto& [name, channels] : modal_channels) order.push_back(name);
    std::map<std::string, Blueprint> supers =
        build_superlayers(split.extractor, res.scales, modal_channels);
    std::vector<CrossConnection> conns = place_connections(
        supers, order, res.insertion_points, res.weights, cfg.drop_threshold);
    res.xblueprint = assemble_xcnn(std::move(supers), order, res.insertion_points,
                                   std::move(conns), split.classifier);
    res.base_parameters = parameter_count(b);
    res.x_parameters = parameter_count(res.xblueprint);
    return res;
}

TransformResult transform(const Blueprint& b, const ModalViews& modal_data,
                          const TransformConfig& cfg) {
    InformativenessReport report = measure_informativeness(b, modal_data, cfg);
    std::vector<std::pair<std::string, int>> modal_channels;
    for (const auto& [name, view] : modal_data)
        modal_channels.emplace_back(name, view.channels());
    return build_xcnn(b, report, modal_channels, cfg);
}

std::string transform_report_json(const TransformResult& result) {
    json doc;
    doc["format_version"] = 1;
    doc["scores"] = result.report.scores;
    doc["class_count"] = result.report.class_count;
    json scales = json::object();
    for (const auto& [name, s] : result.scales.scales) scales[name] = s;
    doc["scales"] = std::move(scales);
    json weights = json::array();
    for (const auto& [pair, w] : result.weights.w) {
        json row;
        row["src"] = pair.first;
        row["dst"] = pair.second;
        row["weight"] = w;
        weights.push_back(std::move(row));
    }
    doc["weights"] = std::move(weights);
    doc["insertion_points"] = result.insertion_points;
    doc["parameters"] = {{"base", result.base_parameters}, {"xcnn", result.x_parameters}};
    json hist = json::object();
    for (const auto& [name, h] : result.report.probe_histories) {
        json rows = json::array();
        for (const EpochStats& e : h)
            rows.push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_accuracy", e.val_accuracy}});
        hist[name] = std::move(rows);
    }
    doc["probe_histories"] = std::move(hist);
    return doc.dump(2) + "\n";
}

}  // namespace xcnn
