// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion; exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"
#include "xcnn/experiment.hpp"
#include "xcnn/iterative.hpp"
#include "xcnn/params_io.hpp"
#include "xcnn/transform.hpp"

using namespace xcnn;
using json = nlohmann::json;

namespace {

int failures = 0;
std::vector<std::string> notes;

void note(const std::string& msg) { notes.push_back(msg); }

class Criterion {
public:
    Criterion(int index, std::string name)
        : index_(index), name_(std::move(name)),
          start_(std::chrono::steady_clock::now()) {}

    void check(bool ok, const std::string& what) {
        if (!ok) failed_.push_back(what);
    }

    ~Criterion() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (failed_.empty()) {
            std::printf("PASS  criterion %d: %s (%.1fs)\n", index_, name_.c_str(), secs);
        } else {
            failures++;
            std::printf("FAIL  criterion %d: %s (%.1fs)\n", index_, name_.c_str(), secs);
            for (const std::string& f : failed_) std::printf("      - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }

private:
    int index_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> failed_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

InformativenessReport report_of(std::map<std::string, double> scores, int classes) {
    InformativenessReport r;
    r.scores = std::move(scores);
    r.class_count = classes;
    return r;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("xcnn_acceptance_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// --- criterion 1: formula correctness ---------------------------------------

void criterion_1() {
    Criterion c(1, "scale and connection-weight formulas exact on hand cases (<= 1e-12)");

    ScalePlan p1 = compute_scales(report_of({{"a", 0.8}, {"b", 0.4}, {"c", 0.4}}, 10), 1.0);
    c.check(std::abs(p1.scales.at("a") - 0.5) <= 1e-12, "alpha=1 scale a != 0.5");
    c.check(std::abs(p1.scales.at("b") - 0.25) <= 1e-12, "alpha=1 scale b != 0.25");
    c.check(std::abs(p1.scales.at("c") - 0.25) <= 1e-12, "alpha=1 scale c != 0.25");

    ScalePlan p2 = compute_scales(report_of({{"a", 0.8}, {"b", 0.4}}, 10), 2.0);
    c.check(std::abs(p2.scales.at("a") - 0.8) <= 1e-12, "alpha=2 scale a != 0.8");
    c.check(std::abs(p2.scales.at("b") - 0.2) <= 1e-12, "alpha=2 scale b != 0.2");

    ScalePlan sym = compute_scales(report_of({{"a", 0.5}, {"b", 0.5}}, 10), 3.7);
    c.check(std::abs(sym.scales.at("a") - 0.5) <= 1e-12, "equal scores not split evenly");

    double sum = 0.0;
    for (const auto& [name, s] : p1.scales) sum += s;
    c.check(std::abs(sum - 1.0) <= 1e-12, "scales do not sum to 1");

    WeightMatrix b2 = compute_connection_weights(report_of({{"a", 0.8}, {"b", 0.4}}, 10), 2.0);
    c.check(std::abs(b2.at("a", "b") - 0.8) <= 1e-12, "beta=2 w[a,b] != 0.8");
    c.check(std::abs(b2.at("b", "a") - 0.2) <= 1e-12, "beta=2 w[b,a] != 0.2");

    WeightMatrix b4 = compute_connection_weights(report_of({{"a", 0.8}, {"b", 0.4}}, 10), 4.0);
    c.check(std::abs(b4.at("a", "b") - 0.4096 / (0.4096 + 0.0256)) <= 1e-12,
            "beta=4 w[a,b] != 0.4096/0.4352");

    WeightMatrix b0 =
        compute_connection_weights(report_of({{"a", 0.9}, {"b", 0.3}, {"c", 0.6}}, 10), 0.0);
    for (const auto& [pair, w] : b0.w)
        c.check(std::abs(w - 0.5) <= 1e-12, "beta=0 weight != 0.5");

    WeightMatrix eq = compute_connection_weights(report_of({{"a", 0.7}, {"b", 0.7}}, 10), 2.0);
    c.check(std::abs(eq.at("a", "b") - 0.5) <= 1e-12, "equal scores weight != 0.5");

    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        std::map<std::string, double> scores{{"x", 0.2 + 0.8 * rng.uniform()},
                                             {"y", 0.2 + 0.8 * rng.uniform()},
                                             {"z", 0.2 + 0.8 * rng.uniform()}};
        WeightMatrix wm = compute_connection_weights(report_of(scores, 10),
                                                     0.5 + 3.0 * rng.uniform());
        for (const auto& [pair, w] : wm.w)
            c.check(std::abs(w + wm.at(pair.second, pair.first) - 1.0) <= 1e-12,
                    "w[i,j] + w[j,i] != 1");
    }
}

// --- criterion 2: gradient fidelity ------------------------------------------

void criterion_2() {
    Criterion c(2, "finite-difference gradients < 1e-4 (1e-3 train-mode batchnorm)");

    auto conv = [](std::string id, int kernels, int k, Padding pad, Activation act,
                   std::vector<std::string> preds) {
        LayerSpec s;
        s.id = std::move(id);
        s.kind = LayerKind::conv;
        s.kernel_count = kernels;
        s.kernel_hw = {k, k};
        s.padding = pad;
        s.activation = act;
        s.predecessors = std::move(preds);
        return s;
    };
    auto plain = [](std::string id, LayerKind kind, std::vector<std::string> preds) {
        LayerSpec s;
        s.id = std::move(id);
        s.kind = kind;
        s.predecessors = std::move(preds);
        return s;
    };
    auto head = [&](std::vector<LayerSpec> body, Shape input) {
        Blueprint b;
        b.input_shape = input;
        std::string prev = body.back().id;
        for (LayerSpec& s : body) b.nodes.emplace(s.id, std::move(s));
        LayerSpec flat = plain("flat", LayerKind::flatten, {prev});
        LayerSpec fc = plain("fc", LayerKind::dense, {"flat"});
        fc.units = 3;
        b.nodes.emplace("flat", flat);
        b.nodes.emplace("fc", fc);
        b.output_id = "fc";
        validate(b);
        return b;
    };
    auto run = [&](const Blueprint& b, bool training, uint64_t seed) {
        ExecutableModel<double> m = compile<double>(b, seed);
        Batchset<double> batch;
        Rng rng(seed + 1);
        for (const Shape& s : m.graph().input_shapes) {
            Tensor<double> t({3, s.h, s.w, s.c});
            for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
            batch.inputs.push_back(std::move(t));
        }
        for (int i = 0; i < 3; ++i) batch.labels.push_back(static_cast<int>(rng.below(3)));
        return grad_check(m, batch, 1e-5, 64, training);
    };

    c.check(run(head({conv("c1", 4, 3, Padding::same, Activation::relu, {})}, {6, 6, 2}),
                false, 11) < 1e-4,
            "conv same+relu");
    c.check(run(head({conv("c1", 3, 3, Padding::valid, Activation::none, {})}, {6, 6, 2}),
                false, 12) < 1e-4,
            "conv valid");
    {
        Blueprint dense_net;
        dense_net.input_shape = {3, 3, 2};
        LayerSpec flat = plain("flat", LayerKind::flatten, {});
        LayerSpec fc1 = plain("fc1", LayerKind::dense, {"flat"});
        fc1.units = 6;
        fc1.activation = Activation::relu;
        LayerSpec fc2 = plain("fc2", LayerKind::dense, {"fc1"});
        fc2.units = 3;
        dense_net.nodes = {{"flat", flat}, {"fc1", fc1}, {"fc2", fc2}};
        dense_net.output_id = "fc2";
        validate(dense_net);
        c.check(run(dense_net, false, 13) < 1e-4, "dense");
    }
    {
        LayerSpec pool = plain("p1", LayerKind::pool, {"c1"});
        pool.window = {2, 2};
        pool.pool_stride = {2, 2};
        c.check(run(head({conv("c1", 3, 3, Padding::same, Activation::relu, {}), pool},
                         {6, 6, 2}),
                    false, 14) < 1e-4,
                "max pool");
        LayerSpec pool2 = pool;
        pool2.pool_mode = PoolMode::avg;
        c.check(run(head({conv("c1", 3, 3, Padding::same, Activation::none, {}), pool2},
                         {6, 6, 2}),
                    false, 15) < 1e-4,
                "avg pool");
    }
    {
        Blueprint bn = head({conv("c1", 3, 3, Padding::same, Activation::none, {}),
                             plain("bn1", LayerKind::batchnorm, {"c1"})},
                            {5, 5, 2});
        c.check(run(bn, true, 16) < 1e-3, "batchnorm train mode");
        c.check(run(bn, false, 16) < 1e-4, "batchnorm eval mode");
    }
    c.check(run(head({conv("c1", 3, 3, Padding::same, Activation::relu, {}),
                      conv("c2", 2, 3, Padding::same, Activation::relu, {"c1"}),
                      conv("c3", 3, 1, Padding::same, Activation::none, {"c1"}),
                      plain("m", LayerKind::concat, {"c2", "c3"})},
                     {5, 5, 1}),
                false, 17) < 1e-4,
            "concat");
    c.check(run(head({conv("c1", 3, 3, Padding::same, Activation::relu, {}),
                      conv("c2", 3, 3, Padding::same, Activation::relu, {"c1"}),
                      plain("m", LayerKind::add, {"c1", "c2"})},
                     {5, 5, 1}),
                false, 18) < 1e-4,
            "add");
    {
        LayerSpec drop = plain("d1", LayerKind::dropout, {"c1"});
        drop.rate = 0.5;
        c.check(run(head({conv("c1", 3, 3, Padding::same, Activation::relu, {}), drop},
                         {5, 5, 2}),
                    false, 19) < 1e-4,
                "dropout eval mode");
    }
    {
        // connection sub-graph inside a real 2-modality X-CNN
        TransformConfig cfg;
        TransformResult res = build_xcnn(fixtures::desknet(3, 2),
                                         report_of({{"a", 0.7}, {"b", 0.5}}, 3),
                                         {{"a", 1}, {"b", 1}}, cfg);
        ExecutableModel<double> m = compile<double>(res.xblueprint, 23);
        Batchset<double> batch;
        Rng rng(24);
        for (const Shape& s : m.graph().input_shapes) {
            Tensor<double> t({3, s.h, s.w, s.c});
            for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
            batch.inputs.push_back(std::move(t));
        }
        for (int i = 0; i < 3; ++i) batch.labels.push_back(static_cast<int>(rng.below(3)));
        c.check(grad_check(m, batch, 1e-5, 48, true) < 1e-3,
                "connection sub-graph (train mode)");
        c.check(grad_check(m, batch, 1e-5, 48, false) < 1e-4,
                "connection sub-graph (eval mode)");
    }
}

// --- criterion 3: topology invariants ----------------------------------------

void criterion_3() {
    Criterion c(3, "topology invariants and parameter budget on the stack fixture");

    Blueprint fixture = parse_blueprint(fixtures::stacknet_json());
    TransformConfig cfg;  // alpha 1, defaults
    TransformResult res =
        build_xcnn(fixture, report_of({{"U", 0.5}, {"V", 0.5}, {"Y", 0.5}}, 10),
                   {{"Y", 1}, {"U", 1}, {"V", 1}}, cfg);

    // exactly n(n-1) = 6 connections per insertion depth
    std::map<int, int> per_depth;
    for (const CrossConnection& conn : res.xblueprint.connections)
        per_depth[conn.depth_index]++;
    c.check(per_depth.size() == res.insertion_points.size(), "missing depth in connections");
    for (const auto& [depth, count] : per_depth)
        c.check(count == 6, "depth " + std::to_string(depth) + " has " +
                                std::to_string(count) + " connections, want 6");

    // super-layers isomorphic to the base extractor
    try {
        validate(res.xblueprint);
    } catch (const Error& e) {
        c.check(false, std::string("xblueprint validation: ") + e.what());
    }
    SplitBlueprint parts = split_at_classifier(fixture);
    for (const auto& [name, frag] : res.xblueprint.superlayers) {
        c.check(frag.nodes.size() == parts.extractor.nodes.size(),
                "superlayer " + name + " node count differs from the extractor");
        for (const auto& [id, spec] : parts.extractor.nodes)
            c.check(frag.nodes.count(name + "/" + id) == 1,
                    "superlayer " + name + " missing node " + id);
    }

    // parameter budget within 15 percent
    const double deviation =
        std::abs(static_cast<double>(res.x_parameters - res.base_parameters)) /
        static_cast<double>(res.base_parameters);
    c.check(deviation <= 0.15,
            "parameter deviation " + fmt(deviation) + " exceeds 0.15 (base " +
                std::to_string(res.base_parameters) + ", xcnn " +
                std::to_string(res.x_parameters) + ")");
    note("criterion 3: parameter budget deviation " + fmt(deviation) + " (base " +
         std::to_string(res.base_parameters) + ", xcnn " + std::to_string(res.x_parameters) +
         ")");

    // parameter_count equals the brute-force tensor-enumeration oracle
    Rng rng(1203);
    for (int i = 0; i < 20; ++i) {
        Blueprint b = fixtures::random_blueprint(rng);
        LoweredGraph g = lower(b);
        ExecutableModel<float> m = compile<float>(g, 1);
        int64_t brute = 0;
        for (const auto& [id, tensors] : m.params())
            for (const Tensor<float>& t : tensors) brute += t.numel();
        c.check(parameter_count(g) == brute,
                "random blueprint " + std::to_string(i) + ": formula " +
                    std::to_string(parameter_count(g)) + " != oracle " +
                    std::to_string(brute));
    }
}

// --- criterion 4: informativeness recovery -----------------------------------

void criterion_4() {
    Criterion c(4, "informativeness ordering on strengths (1.0, 0.3, 0.0) over 10 seeds");

    SynthConfig sc;
    sc.n = 4000;
    sc.classes = 10;
    sc.signal_strengths = {1.0, 0.3, 0.0};
    sc.noise_sigma = 1.0;
    Blueprint base = fixtures::desknet(10, 3);

    int ordered = 0;
    int noise_in_band = 0;
    double noise_sum = 0.0;
    const double chance = 1.0 / sc.classes;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SynthDataset sd = synth_multimodal(sc, 600 + seed);
        ModalViews views = split_modalities(sd.data, sd.specs);
        TransformConfig cfg;
        cfg.seed = seed;
        cfg.probe_epochs = 8;
        InformativenessReport r = measure_informativeness(base, views, cfg);
        const double n1 = r.scores.at("m0"), n2 = r.scores.at("m1"), n3 = r.scores.at("m2");
        if (n1 > n2 && n2 > n3) ordered++;
        if (n3 >= chance - 0.03 && n3 <= chance + 0.03) noise_in_band++;
        noise_sum += n3;
        note("criterion 4 seed " + std::to_string(seed) + ": n1=" + fmt(n1) +
             " n2=" + fmt(n2) + " n3=" + fmt(n3));
    }
    c.check(ordered >= 9, "ordering n1 > n2 > n3 held in " + std::to_string(ordered) +
                              "/10 seeds, want >= 9");
    c.check(noise_in_band >= 9, "noise score within chance +/- 0.03 in " +
                                    std::to_string(noise_in_band) + "/10 seeds, want >= 9");
    c.check(std::abs(noise_sum / 10.0 - chance) <= 0.03,
            "mean noise score " + fmt(noise_sum / 10.0) + " outside chance +/- 0.03");
}

// --- criterion 5: transform benefit at desk scale -----------------------------

void criterion_5() {
    Criterion c(5, "X-CNN vs parameter-matched base at 20% retention over 5 seeds");

    SynthConfig sc;
    sc.n = 4000;
    sc.classes = 10;
    sc.signal_strengths = {1.0, 0.4, 0.0};
    sc.noise_sigma = 1.5;
    SynthDataset sd = synth_multimodal(sc, 1234);
    Blueprint base = fixtures::desknet(10, 3);

    int x_wins = 0;
    double x_sum = 0.0, base_sum = 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        LabeledDataset retained =
            subsample_per_class(sd.data, 20.0, mix_seed(seed, "retention"));
        ModalViews views = split_modalities(retained, sd.specs);

        TransformConfig tcfg;
        tcfg.seed = seed;
        TransformResult res = transform(base, views, tcfg);

        TrainConfig tc;
        tc.epochs = 30;
        tc.seed = mix_seed(seed, "final-train");

        SplitViews sv = train_val_split(views, 0.8, mix_seed(seed, "final-split"));
        ExecutableModel<float> xm =
            compile<float>(res.xblueprint, mix_seed(seed, "final-init"));
        Batchset<float> xtrain = to_batchset(sv.train);
        Batchset<float> xval = to_batchset(sv.val);
        train(xm, xtrain, &xval, tc);
        const double x_acc = evaluate(xm, xval);

        SplitDataset sb = train_val_split(retained, 0.8, mix_seed(seed, "final-split"));
        ExecutableModel<float> bm = compile<float>(base, mix_seed(seed, "final-init"));
        Batchset<float> btrain = to_batchset(sb.train);
        Batchset<float> bval = to_batchset(sb.val);
        train(bm, btrain, &bval, tc);
        const double base_acc = evaluate(bm, bval);

        if (x_acc > base_acc) x_wins++;
        x_sum += x_acc;
        base_sum += base_acc;
        note("criterion 5 seed " + std::to_string(seed) + ": xcnn=" + fmt(x_acc) +
             " base=" + fmt(base_acc) + " (xcnn params " + std::to_string(res.x_parameters) +
             " vs base " + std::to_string(res.base_parameters) + ")");
    }
    c.check(x_sum / 5.0 >= base_sum / 5.0,
            "mean xcnn " + fmt(x_sum / 5.0) + " < mean base " + fmt(base_sum / 5.0));
    c.check(x_wins >= 3, "xcnn won " + std::to_string(x_wins) + "/5 seeds, want >= 3");
    note("criterion 5: mean xcnn " + fmt(x_sum / 5.0) + " vs base " + fmt(base_sum / 5.0) +
         ", wins " + std::to_string(x_wins) + "/5");
}

// --- criterion 6: iterative behaviour -----------------------------------------

void criterion_6() {
    Criterion c(6, "noise-origin weights decay to drop; fixed seed reproduces trajectory");

    SynthConfig sc;
    sc.n = 1600;
    sc.classes = 10;
    sc.signal_strengths = {1.0, 0.0};
    sc.noise_sigma = 2.0;
    SynthDataset sd = synth_multimodal(sc, 77);
    ModalViews views = split_modalities(sd.data, sd.specs);
    Blueprint base = fixtures::desknet(10, 2);

    TransformConfig tcfg;
    tcfg.seed = 5;
    IterConfig icfg;  // default decay 0.01, lr_w 0.05, delta 0.1
    icfg.generations = 15;
    icfg.epochs_per_gen = 8;
    icfg.pretrain_epochs = 40;
    icfg.seed = 5;

    auto dir1 = scratch("iter1");
    IterateResult res = iterate(base, views, tcfg, icfg, dir1, false);

    const std::string noise = "m1";
    auto noise_origin_sum = [&](const GenerationRecord& rec) {
        double sum = 0.0;
        for (const auto& [pair, w] : rec.weights.w)
            if (pair.first == noise) sum += w;
        return sum;
    };
    const double gen1 = noise_origin_sum(res.trajectory.at(1));
    const double last = noise_origin_sum(res.trajectory.back());
    c.check(last < gen1, "noise-origin weight sum did not decrease: gen1 " + fmt(gen1) +
                             " vs final " + fmt(last));

    bool dropped = false;
    int drop_gen = -1;
    for (const GenerationRecord& rec : res.trajectory) {
        for (const auto& [pair, w] : rec.weights.w)
            if (pair.first == noise && w < tcfg.drop_threshold) {
                dropped = true;
                if (drop_gen < 0) drop_gen = rec.index;
            }
        if (dropped) break;
    }
    c.check(dropped, "no noise-origin connection reached drop status in 15 generations");
    note("criterion 6: noise-origin sum gen1 " + fmt(gen1) + " -> final " + fmt(last) +
         (dropped ? ", first drop at generation " + std::to_string(drop_gen) : ""));

    auto dir2 = scratch("iter2");
    iterate(base, views, tcfg, icfg, dir2, false);
    c.check(read_file(dir1 / "trajectory.jsonl") == read_file(dir2 / "trajectory.jsonl"),
            "trajectory differs between identical runs");
    c.check(read_file(dir1 / "gen_014.params") == read_file(dir2 / "gen_014.params"),
            "final generation parameters differ between identical runs");
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

// --- criterion 7: determinism and round-trips ----------------------------------

void criterion_7() {
    Criterion c(7, "round-trip identity and byte-identical reruns");

    Rng rng(4242);
    for (int i = 0; i < 50; ++i) {
        Blueprint b = fixtures::random_blueprint(rng);
        if (!(parse_blueprint(serialize_blueprint(b)) == b)) {
            c.check(false, "round-trip failed on random blueprint " + std::to_string(i));
            break;
        }
    }

    auto dir = scratch("determinism");
    std::ofstream(dir / "blueprint.json") << serialize_blueprint(fixtures::desknet(5, 2));
    json cfg_json;
    cfg_json["blueprint"] = (dir / "blueprint.json").string();
    cfg_json["dataset"] = {
        {"synthetic", {{"n", 300}, {"classes", 5}, {"strengths", {1.0, 0.2}}}}};
    cfg_json["retention_p"] = {100};
    cfg_json["seeds"] = {0};
    cfg_json["train"] = {{"epochs", 2}};
    cfg_json["transform"] = {{"probe_epochs", 2}, {"seed", 3}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());

    run_transform(cfg, dir / "t1");
    run_transform(cfg, dir / "t2");
    c.check(read_file(dir / "t1/xblueprint.json") == read_file(dir / "t2/xblueprint.json"),
            "xblueprint documents differ across reruns");

    run_train(cfg, dir / "t1/xblueprint.json", dir / "r1");
    run_train(cfg, dir / "t1/xblueprint.json", dir / "r2");
    c.check(read_file(dir / "r1/metrics.csv") == read_file(dir / "r2/metrics.csv"),
            "metrics CSVs differ across reruns");
    c.check(read_file(dir / "r1/xblueprint_p100_s0.params") ==
                read_file(dir / "r2/xblueprint_p100_s0.params"),
            "parameter containers differ across reruns");
    std::filesystem::remove_all(dir);
}

// --- criterion 8: protocol conformance ------------------------------------------

void criterion_8() {
    Criterion c(8, "configuration echo: split, retention rule, probe scale, defaults");

    auto dir = scratch("echo");
    std::ofstream(dir / "blueprint.json") << serialize_blueprint(fixtures::desknet(5, 2));
    json cfg_json;
    cfg_json["blueprint"] = (dir / "blueprint.json").string();
    cfg_json["dataset"] = {{"synthetic", {{"n", 100}, {"classes", 5}}}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());
    json echo = json::parse(effective_config_json(cfg));

    c.check(echo.at("transform").at("internal_split").get<double>() == 0.8,
            "internal split default is not 0.8");
    c.check(echo.at("protocol").at("internal_split_stratified").get<bool>(),
            "internal split is not stratified");
    c.check(echo.at("protocol").at("retention_rule").get<std::string>() == "ceil_per_class",
            "retention rule is not per-class ceil");
    c.check(echo.at("protocol").at("probe_width_scale").get<std::string>() ==
                "1/n_modalities",
            "probe width scale is not 1/n");
    const double alpha = echo.at("transform").at("alpha").get<double>();
    const double beta = echo.at("transform").at("beta").get<double>();
    c.check(alpha == 1.0 || alpha == 2.0, "alpha default outside {1, 2}");
    c.check(beta == 2.0 || beta == 4.0, "beta default outside {2, 4}");
    c.check(echo.at("retention_p") == json({20, 40, 60, 80, 100}),
            "retention sweep default is not [20, 40, 60, 80, 100]");

    // behavioural echoes of the same rules
    Blueprint probe = scale_probe(parse_blueprint(fixtures::stacknet_json()), 3, 1);
    c.check(probe.nodes.at("conv1").kernel_count == 11, "probe scaling is not 1/n on convs");
    c.check(probe.nodes.at("fc1").units == 512, "probe scaling touched the classifier");

    SynthConfig sc;
    sc.n = 250;
    sc.classes = 5;
    sc.signal_strengths = {0.5};
    SynthDataset sd = synth_multimodal(sc, 3);
    LabeledDataset sub = subsample_per_class(sd.data, 1.0, 1);
    std::map<int, int> counts;
    for (int label : *sub.labels) counts[label]++;
    c.check(counts.size() == 5, "ceil retention emptied a class");
    SplitDataset split = train_val_split(sd.data, cfg.transform.internal_split, 2);
    std::map<int, int> tc_counts, vc_counts;
    for (int label : *split.train.labels) tc_counts[label]++;
    for (int label : *split.val.labels) vc_counts[label]++;
    for (int cls = 0; cls < 5; ++cls)
        c.check(tc_counts[cls] > 0 && vc_counts[cls] > 0,
                "split is not stratified for class " + std::to_string(cls));
    std::filesystem::remove_all(dir);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    std::printf("================\n");
    for (const std::string& line : notes) std::printf("note: %s\n", line.c_str());
    if (failures) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all 8 criteria passed\n");
    return 0;
}
