// SPDX-License-Identifier: Apache-2.0

#include "xcnn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace xcnn {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open \"" + path.string() + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write \"" + path.string() + "\"");
    out << text;
}

// Timestamps are confined to this sidecar so every other output is a pure
// function of (config, seed).
void write_run_meta(const std::filesystem::path& out_dir, const std::string& command,
                    double wall_seconds) {
    json meta;
    meta["command"] = command;
    meta["wall_seconds"] = wall_seconds;
    const auto now = std::chrono::system_clock::now();
    meta["finished_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    write_file(out_dir / "run_meta.json", meta.dump(2) + "\n");
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

uint64_t require_u64(const json& j, const char* key, const std::string& path) {
    if (!j.at(key).is_number_unsigned() && !j.at(key).is_number_integer())
        throw config_error(path + "." + key + ": expected integer");
    return j.at(key).get<uint64_t>();
}

}  // namespace

std::string format_double(double v) { return json(v).dump(); }

double t_quantile_95(int n) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    const int df = n - 1;
    if (df < 1) return 0.0;
    if (df <= 30) return table[df - 1];
    return 1.96;
}

namespace {
ExperimentConfig parse_experiment_config_impl(const std::string& text);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    try {
        return parse_experiment_config_impl(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
}

namespace {

ExperimentConfig parse_experiment_config_impl(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw config_error("config: not valid JSON");
    if (!doc.is_object()) throw config_error("config: expected JSON object");

    ExperimentConfig cfg;
    if (!doc.contains("blueprint") || !doc.at("blueprint").is_string())
        throw config_error("config.blueprint: required string (path to blueprint document)");
    cfg.blueprint_path = doc.at("blueprint").get<std::string>();

    if (!doc.contains("dataset") || !doc.at("dataset").is_object())
        throw config_error("config.dataset: required object ({\"cifar10\": path} or "
                           "{\"synthetic\": {...}})");
    const json& ds = doc.at("dataset");
    if (ds.contains("cifar10")) {
        cfg.dataset.kind = DatasetSpec::Kind::cifar10;
        if (!ds.at("cifar10").is_string())
            throw config_error("config.dataset.cifar10: expected path string");
        cfg.dataset.path = ds.at("cifar10").get<std::string>();
    } else if (ds.contains("synthetic")) {
        cfg.dataset.kind = DatasetSpec::Kind::synthetic;
        const json& sy = ds.at("synthetic");
        if (!sy.is_object()) throw config_error("config.dataset.synthetic: expected object");
        SynthConfig& s = cfg.dataset.synth;
        if (sy.contains("n")) s.n = sy.at("n").get<int>();
        if (sy.contains("classes")) s.classes = sy.at("classes").get<int>();
        if (sy.contains("height")) s.height = sy.at("height").get<int>();
        if (sy.contains("width")) s.width = sy.at("width").get<int>();
        if (sy.contains("noise_sigma")) s.noise_sigma = sy.at("noise_sigma").get<double>();
        if (sy.contains("strengths")) {
            s.signal_strengths.clear();
            for (const auto& v : sy.at("strengths")) s.signal_strengths.push_back(v.get<double>());
        }
        if (sy.contains("seed")) cfg.dataset.synth_seed = require_u64(sy, "seed", "config.dataset.synthetic");
    } else {
        throw config_error("config.dataset: expected \"cifar10\" or \"synthetic\"");
    }

    if (doc.contains("modalities")) {
        const json& mods = doc.at("modalities");
        if (mods.is_string()) {
            if (mods.get<std::string>() != "yuv")
                throw config_error("config.modalities: only \"yuv\" or an explicit list");
            cfg.modalities_yuv = true;
        } else if (mods.is_array()) {
            for (size_t i = 0; i < mods.size(); ++i) {
                const std::string path = "config.modalities[" + std::to_string(i) + "]";
                const json& m = mods[i];
                if (!m.is_object() || !m.contains("name") || !m.contains("channels"))
                    throw config_error(path + ": expected {name, channels}");
                ModalitySpec spec;
                spec.name = m.at("name").get<std::string>();
                for (const auto& c : m.at("channels")) spec.channel_indices.push_back(c.get<int>());
                cfg.modalities.push_back(std::move(spec));
            }
        } else {
            throw config_error("config.modalities: expected \"yuv\" or array");
        }
    } else if (cfg.dataset.kind == DatasetSpec::Kind::cifar10) {
        cfg.modalities_yuv = true;  // default for image data
    }

    if (doc.contains("retention_p")) {
        cfg.retention_p.clear();
        for (const auto& v : doc.at("retention_p")) {
            const double p = v.get<double>();
            if (p <= 0.0 || p > 100.0)
                throw config_error("config.retention_p: values must be in (0, 100]");
            cfg.retention_p.push_back(p);
        }
        if (cfg.retention_p.empty())
            throw config_error("config.retention_p: must be non-empty");
    }

    if (doc.contains("transform")) {
        const json& t = doc.at("transform");
        if (t.contains("alpha")) cfg.transform.alpha = t.at("alpha").get<double>();
        if (t.contains("beta")) cfg.transform.beta = t.at("beta").get<double>();
        if (t.contains("probe_epochs")) cfg.transform.probe_epochs = t.at("probe_epochs").get<int>();
        if (t.contains("internal_split"))
            cfg.transform.internal_split = t.at("internal_split").get<double>();
        if (t.contains("drop_threshold"))
            cfg.transform.drop_threshold = t.at("drop_threshold").get<double>();
        if (t.contains("probe_seeds")) cfg.transform.probe_seeds = t.at("probe_seeds").get<int>();
        if (t.contains("seed")) cfg.transform.seed = require_u64(t, "seed", "config.transform");
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        if (t.contains("learning_rate")) cfg.train.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("beta1")) cfg.train.beta1 = t.at("beta1").get<double>();
        if (t.contains("beta2")) cfg.train.beta2 = t.at("beta2").get<double>();
        if (t.contains("epsilon")) cfg.train.epsilon = t.at("epsilon").get<double>();
        if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
        if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
    }
    if (doc.contains("iterative")) {
        const json& t = doc.at("iterative");
        if (t.contains("generations")) cfg.iterative.generations = t.at("generations").get<int>();
        if (t.contains("epochs_per_gen"))
            cfg.iterative.epochs_per_gen = t.at("epochs_per_gen").get<int>();
        if (t.contains("pretrain_epochs"))
            cfg.iterative.pretrain_epochs = t.at("pretrain_epochs").get<int>();
        if (t.contains("averaging_window"))
            cfg.iterative.averaging_window = t.at("averaging_window").get<int>();
        if (t.contains("lr_w")) cfg.iterative.lr_w = t.at("lr_w").get<double>();
        if (t.contains("decay")) cfg.iterative.decay = t.at("decay").get<double>();
        if (t.contains("delta")) cfg.iterative.delta = t.at("delta").get<double>();
    }
    if (doc.contains("seeds")) {
        cfg.seeds.clear();
        for (const auto& v : doc.at("seeds")) cfg.seeds.push_back(v.get<uint64_t>());
        if (cfg.seeds.empty()) throw config_error("config.seeds: need at least one seed");
    }
    if (doc.contains("output_dir")) cfg.output_dir = doc.at("output_dir").get<std::string>();
    if (doc.contains("parallel")) cfg.parallel = doc.at("parallel").get<int>();
    if (cfg.parallel < 1) throw config_error("config.parallel: must be >= 1");

    cfg.transform.parallel = cfg.parallel;
    cfg.iterative.seed = cfg.transform.seed;
    cfg.iterative.gen_train = cfg.train;
    cfg.transform.probe_train = cfg.train;
    validate(cfg.transform);
    validate(cfg.train);
    validate(cfg.iterative);
    return cfg;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        throw config_error("config file \"" + path.string() + "\" does not exist");
    return parse_experiment_config(read_file(path));
}

std::string effective_config_json(const ExperimentConfig& cfg) {
    json doc;
    doc["blueprint"] = cfg.blueprint_path;
    if (cfg.dataset.kind == DatasetSpec::Kind::cifar10) {
        doc["dataset"] = {{"cifar10", cfg.dataset.path}};
    } else {
        doc["dataset"] = {{"synthetic",
                           {{"n", cfg.dataset.synth.n},
                            {"classes", cfg.dataset.synth.classes},
                            {"height", cfg.dataset.synth.height},
                            {"width", cfg.dataset.synth.width},
                            {"strengths", cfg.dataset.synth.signal_strengths},
                            {"noise_sigma", cfg.dataset.synth.noise_sigma},
                            {"seed", cfg.dataset.synth_seed}}}};
    }
    if (cfg.modalities_yuv) {
        doc["modalities"] = "yuv";
    } else if (!cfg.modalities.empty()) {
        json mods = json::array();
        for (const ModalitySpec& m : cfg.modalities)
            mods.push_back({{"name", m.name}, {"channels", m.channel_indices}});
        doc["modalities"] = std::move(mods);
    } else {
        doc["modalities"] = "from-dataset";
    }
    doc["retention_p"] = cfg.retention_p;
    doc["transform"] = {{"alpha", cfg.transform.alpha},
                        {"beta", cfg.transform.beta},
                        {"probe_epochs", cfg.transform.probe_epochs},
                        {"internal_split", cfg.transform.internal_split},
                        {"drop_threshold", cfg.transform.drop_threshold},
                        {"probe_seeds", cfg.transform.probe_seeds},
                        {"seed", cfg.transform.seed}};
    doc["train"] = {{"learning_rate", cfg.train.learning_rate},
                    {"beta1", cfg.train.beta1},
                    {"beta2", cfg.train.beta2},
                    {"epsilon", cfg.train.epsilon},
                    {"batch_size", cfg.train.batch_size},
                    {"epochs", cfg.train.epochs}};
    doc["iterative"] = {{"generations", cfg.iterative.generations},
                        {"epochs_per_gen", cfg.iterative.epochs_per_gen},
                        {"pretrain_epochs", cfg.iterative.pretrain_epochs},
                        {"averaging_window", cfg.iterative.averaging_window},
                        {"lr_w", cfg.iterative.lr_w},
                        {"decay", cfg.iterative.decay},
                        {"delta", cfg.iterative.delta}};
    doc["seeds"] = cfg.seeds;
    doc["output_dir"] = cfg.output_dir;
    doc["parallel"] = cfg.parallel;
    // Fixed protocol rules, echoed for verification.
    doc["protocol"] = {{"internal_split_stratified", true},
                       {"retention_rule", "ceil_per_class"},
                       {"probe_width_scale", "1/n_modalities"},
                       {"rounding", "half-away-from-zero"}};
    return doc.dump(2) + "\n";
}

Blueprint load_blueprint_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        throw data_error("blueprint file \"" + path.string() + "\" does not exist");
    return parse_blueprint(read_file(path));
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData out;
    if (cfg.dataset.kind == DatasetSpec::Kind::cifar10) {
        LabeledDataset raw = load_cifar10(cfg.dataset.path);
        if (cfg.modalities_yuv) {
            out.full = rgb_to_yuv(raw);
            out.specs = yuv_modalities();
        } else {
            out.full = std::move(raw);
            out.specs = cfg.modalities;
        }
    } else {
        SynthDataset sd = synth_multimodal(cfg.dataset.synth, cfg.dataset.synth_seed);
        out.full = std::move(sd.data);
        out.specs = cfg.modalities.empty() ? sd.specs : cfg.modalities;
        if (cfg.modalities_yuv)
            throw config_error("config.modalities: \"yuv\" requires an RGB dataset");
    }
    if (out.specs.empty()) throw config_error("config.modalities: none defined");
    out.views = split_modalities(out.full, out.specs);
    return out;
}

void run_probe(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    Stopwatch timer;
    std::filesystem::create_directories(out_dir);
    Blueprint b = load_blueprint_file(cfg.blueprint_path);
    PreparedData data = prepare_data(cfg);
    TransformConfig tcfg = cfg.transform;
    InformativenessReport report = measure_informativeness(b, data.views, tcfg);

    json doc;
    doc["format_version"] = 1;
    doc["scores"] = report.scores;
    doc["class_count"] = report.class_count;
    json hist = json::object();
    for (const auto& [name, h] : report.probe_histories) {
        json rows = json::array();
        for (const EpochStats& e : h)
            rows.push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_accuracy", e.val_accuracy}});
        hist[name] = std::move(rows);
    }
    doc["probe_histories"] = std::move(hist);
    write_file(out_dir / "probe_report.json", doc.dump(2) + "\n");
    write_file(out_dir / "effective_config.json", effective_config_json(cfg));
    write_run_meta(out_dir, "probe", timer.seconds());
}

void run_transform(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    Stopwatch timer;
    std::filesystem::create_directories(out_dir);
    Blueprint b = load_blueprint_file(cfg.blueprint_path);
    PreparedData data = prepare_data(cfg);
    TransformResult result = transform(b, data.views, cfg.transform);
    write_file(out_dir / "xblueprint.json", serialize_blueprint(result.xblueprint));
    write_file(out_dir / "transform_report.json", transform_report_json(result));
    write_file(out_dir / "effective_config.json", effective_config_json(cfg));
    write_run_meta(out_dir, "transform", timer.seconds());
}

namespace {

struct TrainJob {
    double retention = 100.0;
    uint64_t seed = 0;
};

struct TrainOutcome {
    MetricsRow row;
    History history;
    Snapshot params;
};

TrainOutcome train_one(const ExperimentConfig& cfg, const PreparedData& data,
                       const std::string& model_name, const Blueprint* base,
                       const XBlueprint* x, const TrainJob& job) {
    LabeledDataset retained =
        job.retention >= 100.0
            ? data.full
            : subsample_per_class(data.full, job.retention, mix_seed(job.seed, "retention"));

    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(job.seed, "final-train");
    TrainOutcome out;

    if (x) {
        ModalViews views = split_modalities(retained, data.specs);
        SplitViews split = train_val_split(views, cfg.transform.internal_split,
                                           mix_seed(job.seed, "final-split"));
        ExecutableModel<float> model =
            compile<float>(*x, mix_seed(job.seed, "final-init"));
        Batchset<float> train_set = to_batchset(split.train);
        Batchset<float> val_set = to_batchset(split.val);
        out.history = train(model, train_set, &val_set, tc);
        out.params = snapshot(model);
    } else {
        SplitDataset split = train_val_split(retained, cfg.transform.internal_split,
                                             mix_seed(job.seed, "final-split"));
        ExecutableModel<float> model =
            compile<float>(*base, mix_seed(job.seed, "final-init"));
        Batchset<float> train_set = to_batchset(split.train);
        Batchset<float> val_set = to_batchset(split.val);
        out.history = train(model, train_set, &val_set, tc);
        out.params = snapshot(model);
    }

    out.row.model = model_name;
    out.row.retention_p = job.retention;
    out.row.seed = job.seed;
    out.row.epochs = cfg.train.epochs;
    out.row.final_val_accuracy = out.history.back().val_accuracy;
    for (const EpochStats& e : out.history)
        out.row.best_val_accuracy = std::max(out.row.best_val_accuracy, e.val_accuracy);
    out.row.final_train_loss = out.history.back().train_loss;
    return out;
}

}  // namespace

void append_metrics(const std::filesystem::path& csv_path, const std::vector<MetricsRow>& rows) {
    std::filesystem::create_directories(csv_path.parent_path());
    const bool fresh = !std::filesystem::exists(csv_path);
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw data_error("cannot write \"" + csv_path.string() + "\"");
    if (fresh)
        out << "model,retention_p,seed,epochs,final_val_accuracy,best_val_accuracy,"
               "final_train_loss\n";
    for (const MetricsRow& r : rows)
        out << r.model << ',' << format_double(r.retention_p) << ',' << r.seed << ','
            << r.epochs << ',' << format_double(r.final_val_accuracy) << ','
            << format_double(r.best_val_accuracy) << ',' << format_double(r.final_train_loss)
            << "\n";
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw data_error("cannot open \"" + csv_path.string() + "\"");
    std::vector<MetricsRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;  // header
        }
        std::istringstream ss(line);
        std::string field;
        MetricsRow r;
        std::getline(ss, r.model, ',');
        std::getline(ss, field, ',');
        r.retention_p = std::stod(field);
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        std::getline(ss, field, ',');
        r.epochs = std::stoi(field);
        std::getline(ss, field, ',');
        r.final_val_accuracy = std::stod(field);
        std::getline(ss, field, ',');
        r.best_val_accuracy = std::stod(field);
        std::getline(ss, field, ',');
        r.final_train_loss = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

void run_train(const ExperimentConfig& cfg, const std::filesystem::path& model_path,
               const std::filesystem::path& out_dir) {
    Stopwatch timer;
    std::filesystem::create_directories(out_dir);
    PreparedData data = prepare_data(cfg);

    Blueprint base;
    XBlueprint x;
    bool is_x = false;
    std::string model_name = "base";
    if (model_path.empty()) {
        base = load_blueprint_file(cfg.blueprint_path);
    } else {
        std::error_code ec;
        if (!std::filesystem::exists(model_path, ec))
            throw data_error("model document \"" + model_path.string() + "\" does not exist");
        const std::string text = read_file(model_path);
        if (document_is_xblueprint(text)) {
            x = parse_xblueprint(text);
            is_x = true;
        } else {
            base = parse_blueprint(text);
        }
        model_name = model_path.stem().string();
    }

    std::vector<TrainJob> jobs;
    for (double p : cfg.retention_p)
        for (uint64_t seed : cfg.seeds) jobs.push_back({p, seed});

    std::vector<TrainOutcome> outcomes(jobs.size());
    auto run_job = [&](size_t j) {
        outcomes[j] = train_one(cfg, data, model_name, is_x ? nullptr : &base,
                                is_x ? &x : nullptr, jobs[j]);
    };
    if (cfg.parallel <= 1) {
        for (size_t j = 0; j < jobs.size(); ++j) run_job(j);
    } else {
        for (size_t start = 0; start < jobs.size();
             start += static_cast<size_t>(cfg.parallel)) {
            std::vector<std::future<void>> batch;
            for (size_t j = start;
                 j < std::min(jobs.size(), start + static_cast<size_t>(cfg.parallel)); ++j)
                batch.push_back(std::async(std::launch::async, run_job, j));
            for (auto& f : batch) f.get();
        }
    }

    std::vector<MetricsRow> rows;
    for (size_t j = 0; j < jobs.size(); ++j) {
        rows.push_back(outcomes[j].row);
        char tag[128];
        std::snprintf(tag, sizeof(tag), "%s_p%g_s%llu", model_name.c_str(), jobs[j].retention,
                      static_cast<unsigned long long>(jobs[j].seed));
        save_snapshot(out_dir / (std::string(tag) + ".params"), outcomes[j].params);
        std::ostringstream hist;
        hist << "epoch,train_loss,val_accuracy\n";
        for (const EpochStats& e : outcomes[j].history)
            hist << e.epoch << ',' << format_double(e.train_loss) << ','
                 << format_double(e.val_accuracy) << "\n";
        write_file(out_dir / (std::string("history_") + tag + ".csv"), hist.str());
    }
    append_metrics(out_dir / "metrics.csv", rows);
    write_file(out_dir / "effective_config.json", effective_config_json(cfg));
    write_run_meta(out_dir, "train", timer.seconds());
}

void run_iterate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                 bool resume) {
    Stopwatch timer;
    std::filesystem::create_directories(out_dir);
    Blueprint b = load_blueprint_file(cfg.blueprint_path);
    PreparedData data = prepare_data(cfg);
    IterateResult result = iterate(b, data.views, cfg.transform, cfg.iterative, out_dir, resume);
    write_file(out_dir / "best_xblueprint.json", serialize_blueprint(result.best_topology));
    save_snapshot(out_dir / "best.params", result.best_params);
    json summary;
    summary["format_version"] = 1;
    summary["best_index"] = result.best_index;
    summary["best_val_accuracy"] = result.trajectory[result.best_index].val_accuracy;
    summary["generations"] = static_cast<int>(result.trajectory.size());
    write_file(out_dir / "iterate_summary.json", summary.dump(2) + "\n");
    write_file(out_dir / "effective_config.json", effective_config_json(cfg));
    write_run_meta(out_dir, "iterate", timer.seconds());
}

void run_report(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw config_error("report: \"" + dir.string() + "\" is not a directory");

    // metrics.csv directly in dir or one level below (per-model run dirs).
    std::vector<std::filesystem::path> csvs;
    if (std::filesystem::exists(dir / "metrics.csv")) csvs.push_back(dir / "metrics.csv");
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "metrics.csv"))
            csvs.push_back(entry.path() / "metrics.csv");
    std::sort(csvs.begin(), csvs.end());
    if (csvs.empty())
        throw config_error("report: no metrics.csv found under \"" + dir.string() + "\"");

    std::vector<MetricsRow> rows;
    for (const auto& p : csvs) {
        std::vector<MetricsRow> part = read_metrics(p);
        rows.insert(rows.end(), part.begin(), part.end());
    }

    std::map<std::string, std::map<double, std::vector<double>>> grouped;
    for (const MetricsRow& r : rows)
        grouped[r.model][r.retention_p].push_back(r.final_val_accuracy);

    std::vector<double> retentions;
    for (const auto& [model, by_p] : grouped)
        for (const auto& [p, accs] : by_p)
            if (std::find(retentions.begin(), retentions.end(), p) == retentions.end())
                retentions.push_back(p);
    std::sort(retentions.begin(), retentions.end());

    auto stats = [](const std::vector<double>& accs) {
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= accs.size();
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const int n = static_cast<int>(accs.size());
        const double ci =
            n > 1 ? t_quantile_95(n) * std::sqrt(var / (n - 1)) / std::sqrt(n) : 0.0;
        return std::pair<double, double>(mean, ci);
    };

    std::ostringstream csv;
    csv << "model,retention_p,n,mean_val_accuracy,ci95\n";
    std::ostringstream txt;
    txt << "model";
    for (double p : retentions) txt << '\t' << format_double(p) << '%';
    txt << "\n";
    for (const auto& [model, by_p] : grouped) {
        txt << model;
        for (double p : retentions) {
            auto it = by_p.find(p);
            if (it == by_p.end()) {
                txt << "\t-";
                continue;
            }
            auto [mean, ci] = stats(it->second);
            char cell[64];
            std::snprintf(cell, sizeof(cell), "%.4f +/- %.4f", mean, ci);
            txt << '\t' << cell;
            csv << model << ',' << format_double(p) << ',' << it->second.size() << ','
                << format_double(mean) << ',' << format_double(ci) << "\n";
        }
        txt << "\n";
    }
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.txt", txt.str());
}

}  // namespace xcnn
