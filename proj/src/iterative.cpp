// SPDX-License-Identifier: Apache-2.0

#include "xcnn/iterative.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace xcnn {

using json = nlohmann::json;

void validate(const IterConfig& cfg) {
    if (cfg.generations < 2) throw config_error("iterate: generations must be >= 2");
    if (cfg.epochs_per_gen < 1) throw config_error("iterate: epochs_per_gen must be >= 1");
    if (cfg.pretrain_epochs < 0) throw config_error("iterate: pretrain_epochs must be >= 0");
    if (cfg.averaging_window < 1) throw config_error("iterate: averaging_window must be >= 1");
    if (cfg.lr_w <= 0.0) throw config_error("iterate: lr_w must be > 0");
    if (cfg.decay < 0.0) throw config_error("iterate: decay must be >= 0");
    if (cfg.delta <= 0.0 || cfg.delta >= 0.5)
        throw config_error("iterate: delta must be in (0, 0.5)");
}

// Per-run structural context shared by all generations.
struct GenerationContext {
    std::map<std::string, Blueprint> superlayers;
    std::vector<std::string> modality_order;
    std::vector<std::string> insertion_points;
    Blueprint classifier;
    double drop_threshold = 0.05;
    uint64_t model_seed = 0;
    Batchset<float> train_set;
    Batchset<float> val_set;
    IterConfig icfg;

    XBlueprint build(const WeightMatrix& wm) const {
        std::vector<CrossConnection> conns = place_connections(
            superlayers, modality_order, insertion_points, wm, drop_threshold);
        return assemble_xcnn(superlayers, modality_order, insertion_points, std::move(conns),
                             classifier);
    }

    std::vector<PairKey> ordered_pairs() const {
        std::vector<PairKey> pairs;
        for (const std::string& src : modality_order)
            for (const std::string& dst : modality_order)
                if (src != dst) pairs.emplace_back(src, dst);
        return pairs;
    }
};

Snapshot pretrain_lock(const XBlueprint& x, const Batchset<float>& train_data, int epochs,
                       const TrainConfig& tc, uint64_t model_seed) {
    XBlueprint stripped = x;
    for (CrossConnection& c : stripped.connections) c.projection_channels = 0;
    ExecutableModel<float> model = compile<float>(stripped, model_seed);
    if (epochs > 0) {
        TrainConfig cfg = tc;
        cfg.epochs = epochs;
        train(model, train_data, cfg);
    }
    return snapshot(model);
}

Snapshot inherit_params(const Snapshot& prev, const XBlueprint& x_new, uint64_t model_seed) {
    ExecutableModel<float> model = compile<float>(x_new, model_seed);
    inherit_into(model, prev);
    return snapshot(model);
}

Snapshot average_snapshots(const std::vector<const Snapshot*>& window) {
    if (window.empty()) throw config_error("average_snapshots: empty window");
    Snapshot out = *window.front();
    for (auto& [id, tensors] : out) {
        std::vector<const std::vector<Tensor<float>>*> matches;
        for (size_t k = 1; k < window.size(); ++k) {
            auto it = window[k]->find(id);
            if (it == window[k]->end() || it->second.size() != tensors.size()) continue;
            bool same = true;
            for (size_t ti = 0; ti < tensors.size() && same; ++ti)
                same = it->second[ti].shape == tensors[ti].shape;
            if (same) matches.push_back(&it->second);
        }
        if (matches.empty()) continue;  // carried through unaveraged
        const float inv = 1.0f / static_cast<float>(matches.size() + 1);
        for (size_t ti = 0; ti < tensors.size(); ++ti)
            for (size_t k = 0; k < tensors[ti].data.size(); ++k) {
                float acc = tensors[ti].data[k];
                for (const auto* m : matches) acc += (*m)[ti].data[k];
                tensors[ti].data[k] = acc * inv;
            }
    }
    return out;
}

namespace {

// Connection weights act on the model only through projection widths, so a
// perturbation that leaves every width (and drop state) unchanged yields a
// compiled model identical to the base one.
bool same_topology(const XBlueprint& a, const XBlueprint& b) {
    if (a.connections.size() != b.connections.size()) return false;
    for (size_t i = 0; i < a.connections.size(); ++i)
        if (a.connections[i].projection_channels != b.connections[i].projection_channels)
            return false;
    return true;
}

}  // namespace

PairGradients measure_pair_gradients(const GenerationContext& ctx,
                                     const GenerationRecord& base, const Snapshot& base_params,
                                     int generation) {
    PairGradients out;
    const XBlueprint base_topology = ctx.build(base.weights);
    for (const PairKey& pair : ctx.ordered_pairs()) {
        const double w = base.weights.at(pair.first, pair.second);
        const double w_var = std::min(1.0, w + ctx.icfg.delta);
        const double effective = w_var - w;
        if (effective <= 0.0) {
            out.gradients[pair] = 0.0;
            out.pair_accuracies[pair] = base.val_accuracy;
            out.clamped.insert(pair);
            continue;
        }
        WeightMatrix wm = base.weights;
        wm.set(pair.first, pair.second, w_var);
        XBlueprint variant = ctx.build(wm);
        if (same_topology(variant, base_topology)) {
            // identical compiled model: the generalisation measure is the
            // base's by definition, so the forward difference is zero
            out.gradients[pair] = 0.0;
            out.pair_accuracies[pair] = base.val_accuracy;
            continue;
        }
        ExecutableModel<float> model = compile<float>(variant, ctx.model_seed);
        inherit_into(model, base_params);
        TrainConfig tc = ctx.icfg.gen_train;
        tc.epochs = ctx.icfg.epochs_per_gen;
        tc.seed = mix_seed(ctx.icfg.seed, "pair-train/" + pair.first + "->" + pair.second,
                           generation);
        try {
            train(model, ctx.train_set, tc);
        } catch (const Error& e) {
            if (e.kind() != Error::Kind::train) throw;
            out.gradients[pair] = 0.0;
            out.pair_accuracies[pair] = -1.0;
            out.diverged.insert(pair);
            continue;
        }
        const double acc = evaluate(model, ctx.val_set);
        out.pair_accuracies[pair] = acc;
        out.gradients[pair] = (acc - base.val_accuracy) / effective;
    }
    return out;
}

WeightMatrix weight_update(WeightOptState& st, const PairMap& grads, const WeightMatrix& w,
                           const IterConfig& cfg) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    WeightMatrix out = w;
    for (auto& [pair, value] : out.w) {
        const double g = grads.count(pair) ? grads.at(pair) : 0.0;
        double& m = st.m[pair];
        double& v = st.v[pair];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        // Nesterov look-ahead on the first moment.
        const double mbar = cfg.beta1 * mhat + (1.0 - cfg.beta1) * g / bc1;
        double next = value + cfg.lr_w * mbar / (std::sqrt(vhat) + cfg.epsilon);
        next *= (1.0 - cfg.decay);
        value = std::clamp(next, 0.0, 1.0);
    }
    return out;
}

// --- persistence -------------------------------------------------------------

namespace {

json weights_to_json(const WeightMatrix& wm) {
    json arr = json::array();
    for (const auto& [pair, v] : wm.w)
        arr.push_back({{"src", pair.first}, {"dst", pair.second}, {"weight", v}});
    return arr;
}

WeightMatrix weights_from_json(const json& arr) {
    WeightMatrix wm;
    for (const auto& row : arr)
        wm.set(row.at("src").get<std::string>(), row.at("dst").get<std::string>(),
               row.at("weight").get<double>());
    return wm;
}

json pairs_to_json(const PairMap& pm) {
    json arr = json::array();
    for (const auto& [pair, v] : pm)
        arr.push_back({{"src", pair.first}, {"dst", pair.second}, {"value", v}});
    return arr;
}

PairMap pairs_from_json(const json& arr) {
    PairMap pm;
    for (const auto& row : arr)
        pm[{row.at("src").get<std::string>(), row.at("dst").get<std::string>()}] =
            row.at("value").get<double>();
    return pm;
}

json keyset_to_json(const std::set<PairKey>& keys) {
    json arr = json::array();
    for (const auto& [src, dst] : keys) arr.push_back({{"src", src}, {"dst", dst}});
    return arr;
}

std::set<PairKey> keyset_from_json(const json& arr) {
    std::set<PairKey> keys;
    for (const auto& row : arr)
        keys.insert({row.at("src").get<std::string>(), row.at("dst").get<std::string>()});
    return keys;
}

// One line per generation; the optimizer state rides along so that a resumed
// run continues the exact ascent trajectory.
json record_to_json(const GenerationRecord& rec, const WeightOptState& opt) {
    json doc;
    doc["index"] = rec.index;
    doc["weights"] = weights_to_json(rec.weights);
    doc["val_accuracy"] = rec.val_accuracy;
    doc["pair_accuracies"] = pairs_to_json(rec.pair_accuracies);
    doc["clamped"] = keyset_to_json(rec.clamped);
    doc["diverged"] = keyset_to_json(rec.diverged);
    doc["params_ref"] = rec.params_ref;
    doc["opt"] = {{"t", opt.t}, {"m", pairs_to_json(opt.m)}, {"v", pairs_to_json(opt.v)}};
    return doc;
}

GenerationRecord record_from_json(const json& doc, WeightOptState& opt) {
    GenerationRecord rec;
    rec.index = doc.at("index").get<int>();
    rec.weights = weights_from_json(doc.at("weights"));
    rec.val_accuracy = doc.at("val_accuracy").get<double>();
    rec.pair_accuracies = pairs_from_json(doc.at("pair_accuracies"));
    rec.clamped = keyset_from_json(doc.at("clamped"));
    rec.diverged = keyset_from_json(doc.at("diverged"));
    rec.params_ref = doc.at("params_ref").get<std::string>();
    opt.t = doc.at("opt").at("t").get<int64_t>();
    opt.m = pairs_from_json(doc.at("opt").at("m"));
    opt.v = pairs_from_json(doc.at("opt").at("v"));
    return rec;
}

std::string gen_file(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gen_%03d.params", index);
    return buf;
}

}  // namespace

IterateResult iterate(const Blueprint& b, const ModalViews& modal_data,
                      const TransformConfig& tcfg, const IterConfig& icfg,
                      const std::filesystem::path& run_dir, bool resume) {
    validate(tcfg);
    validate(icfg);
    std::filesystem::create_directories(run_dir);
    const std::filesystem::path trajectory_path = run_dir / "trajectory.jsonl";
    const std::filesystem::path meta_path = run_dir / "iterate_meta.json";

    SplitViews split = train_val_split(modal_data, tcfg.internal_split,
                                       mix_seed(tcfg.seed, "internal-split"));

    // Informativeness scores drive scales and generation-1 weights. On resume
    // they are reloaded so probes run exactly once per run directory.
    InformativenessReport report;
    if (resume && std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        json meta = json::parse(in);
        report.class_count = meta.at("class_count").get<int>();
        for (auto it = meta.at("scores").begin(); it != meta.at("scores").end(); ++it)
            report.scores[it.key()] = it.value().get<double>();
    } else {
        report = measure_informativeness(b, modal_data, tcfg);
        json meta;
        meta["format_version"] = 1;
        meta["class_count"] = report.class_count;
        meta["scores"] = report.scores;
        std::ofstream out(meta_path, std::ios::trunc);
        out << meta.dump(2) << "\n";
    }

    GenerationContext ctx;
    {
        SplitBlueprint parts = split_at_classifier(b);
        ScalePlan scales = compute_scales(report, tcfg.alpha);
        std::vector<std::pair<std::string, int>> modal_channels;
        for (const auto& [name, view] : modal_data) {
            modal_channels.emplace_back(name, view.channels());
            ctx.modality_order.push_back(name);
        }
        ctx.superlayers = build_superlayers(parts.extractor, scales, modal_channels);
        ctx.insertion_points = find_insertion_points(b);
        ctx.classifier = parts.classifier;
        ctx.drop_threshold = tcfg.drop_threshold;
        ctx.model_seed = mix_seed(icfg.seed, "model-init");
        ctx.train_set = to_batchset(split.train);
        ctx.val_set = to_batchset(split.val);
        ctx.icfg = icfg;
    }

    WeightMatrix equal_weights, base_weights;
    for (const PairKey& pair : ctx.ordered_pairs()) {
        equal_weights.set(pair.first, pair.second, 0.5);
    }
    base_weights = compute_connection_weights(report, tcfg.beta);

    // Locked parameters are the inheritance base of generation 0.
    const std::filesystem::path locked_path = run_dir / "locked.params";
    Snapshot locked;
    if (resume && std::filesystem::exists(locked_path)) {
        locked = load_snapshot(locked_path);
    } else {
        TrainConfig tc = icfg.gen_train;
        tc.seed = mix_seed(icfg.seed, "pretrain");
        locked = pretrain_lock(ctx.build(equal_weights), ctx.train_set, icfg.pretrain_epochs,
                               tc, ctx.model_seed);
        save_snapshot(locked_path, locked);
    }

    std::vector<GenerationRecord> records;
    std::vector<std::string> kept_lines;
    WeightOptState opt;
    bool resumed_any = false;
    bool had_partial_tail = false;
    if (resume && std::filesystem::exists(trajectory_path)) {
        std::ifstream in(trajectory_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json doc = json::parse(line, nullptr, false);
            if (doc.is_discarded()) {  // interrupted mid-write
                had_partial_tail = true;
                break;
            }
            WeightOptState rec_opt;
            GenerationRecord rec;
            try {
                rec = record_from_json(doc, rec_opt);
            } catch (const json::exception&) {
                had_partial_tail = true;  // fields missing: redo this generation
                break;
            }
            if (rec.index != static_cast<int>(records.size()))
                throw data_error("trajectory \"" + trajectory_path.string() +
                                 "\": generation records are not contiguous");
            if (!std::filesystem::exists(run_dir / rec.params_ref)) {
                had_partial_tail = true;  // record without its container: redo it
                break;
            }
            opt = std::move(rec_opt);
            records.push_back(std::move(rec));
            kept_lines.push_back(line);
            resumed_any = true;
        }
    }
    if (had_partial_tail || !resume) {
        // Keep only the complete prefix, byte-for-byte as originally written.
        std::ofstream out(trajectory_path, std::ios::trunc);
        for (const std::string& line : kept_lines) out << line << "\n";
    }

    for (int g = static_cast<int>(records.size()); g < icfg.generations; ++g) {
        GenerationRecord rec;
        rec.index = g;
        Snapshot init;
        if (g == 0) {
            rec.weights = equal_weights;
            init = inherit_params(locked, ctx.build(rec.weights), ctx.model_seed);
        } else {
            const GenerationRecord& prev = records[g - 1];
            Snapshot prev_params = load_snapshot(run_dir / prev.params_ref);
            if (g == 1) {
                rec.weights = base_weights;
            } else {
                PairGradients pg = measure_pair_gradients(ctx, prev, prev_params, g);
                rec.pair_accuracies = pg.pair_accuracies;
                rec.clamped = pg.clamped;
                rec.diverged = pg.diverged;
                rec.weights = weight_update(opt, pg.gradients, prev.weights, icfg);
            }
            init = inherit_params(prev_params, ctx.build(rec.weights), ctx.model_seed);
            if (g >= 2 && icfg.averaging_window >= 2) {
                std::vector<Snapshot> older;
                for (int k = 2; k <= icfg.averaging_window && g - k >= 0; ++k)
                    older.push_back(load_snapshot(run_dir / records[g - k].params_ref));
                std::vector<const Snapshot*> window{&init};
                for (const Snapshot& s : older) window.push_back(&s);
                if (window.size() > 1) init = average_snapshots(window);
            }
        }

        XBlueprint x = ctx.build(rec.weights);
        ExecutableModel<float> model = compile<float>(x, ctx.model_seed);
        restore(model, init);
        TrainConfig tc = icfg.gen_train;
        tc.epochs = icfg.epochs_per_gen;
        tc.seed = mix_seed(icfg.seed, "gen-train", g);
        train(model, ctx.train_set, tc);
        rec.val_accuracy = evaluate(model, ctx.val_set);
        rec.params_ref = gen_file(g);
        save_snapshot(run_dir / rec.params_ref, snapshot(model));

        std::ofstream out(trajectory_path, std::ios::app);
        out << record_to_json(rec, opt).dump() << "\n";
        records.push_back(std::move(rec));
    }

    IterateResult result;
    result.resumed = resumed_any;
    result.best_index = 0;
    for (size_t i = 1; i < records.size(); ++i)
        if (records[i].val_accuracy > records[result.best_index].val_accuracy)
            result.best_index = static_cast<int>(i);
    result.best_topology = ctx.build(records[result.best_index].weights);
    result.best_params = load_snapshot(run_dir / records[result.best_index].params_ref);
    result.trajectory = std::move(records);
    return result;
}

}  // namespace xcnn
