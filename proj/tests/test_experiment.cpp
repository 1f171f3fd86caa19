// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"
#include "xcnn/experiment.hpp"

using namespace xcnn;
using json = nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::filesystem::path write_blueprint(const std::filesystem::path& dir) {
    const auto path = dir / "blueprint.json";
    std::ofstream(path) << serialize_blueprint(fixtures::desknet(5, 2));
    return path;
}

std::string minimal_config(const std::filesystem::path& blueprint) {
    json cfg;
    cfg["blueprint"] = blueprint.string();
    cfg["dataset"] = {{"synthetic", {{"n", 240}, {"classes", 5}, {"strengths", {1.0, 0.2}}}}};
    return cfg.dump();
}

}  // namespace

TEST_CASE("config: full defaulting from a blueprint path and dataset alone") {
    auto dir = scratch_dir("xcnn_cfg_defaults");
    ExperimentConfig cfg = parse_experiment_config(minimal_config(write_blueprint(dir)));
    CHECK(cfg.retention_p == std::vector<double>{20, 40, 60, 80, 100});
    CHECK(cfg.transform.alpha == 1.0);
    CHECK(cfg.transform.beta == 2.0);
    CHECK(cfg.transform.internal_split == 0.8);
    CHECK(cfg.transform.drop_threshold == 0.05);
    CHECK(cfg.train.learning_rate == 1e-3);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.iterative.generations == 15);
    CHECK(cfg.iterative.averaging_window == 2);
    CHECK(cfg.iterative.lr_w == 0.05);
    CHECK(cfg.iterative.decay == 0.01);
    CHECK(cfg.iterative.delta == 0.1);
    CHECK(cfg.seeds == std::vector<uint64_t>{0});
    CHECK(cfg.parallel == 1);
}

TEST_CASE("config: effective echo carries the protocol rules") {
    auto dir = scratch_dir("xcnn_cfg_echo");
    ExperimentConfig cfg = parse_experiment_config(minimal_config(write_blueprint(dir)));
    json echo = json::parse(effective_config_json(cfg));
    CHECK(echo.at("transform").at("internal_split").get<double>() == 0.8);
    CHECK(echo.at("protocol").at("internal_split_stratified").get<bool>());
    CHECK(echo.at("protocol").at("retention_rule").get<std::string>() == "ceil_per_class");
    CHECK(echo.at("protocol").at("probe_width_scale").get<std::string>() == "1/n_modalities");
    CHECK(echo.at("retention_p") == json({20, 40, 60, 80, 100}));
    const double alpha = echo.at("transform").at("alpha").get<double>();
    const double beta = echo.at("transform").at("beta").get<double>();
    CHECK((alpha == 1.0 || alpha == 2.0));
    CHECK((beta == 2.0 || beta == 4.0));
}

TEST_CASE("config: invariant violations are rejected with exit-code 2 semantics") {
    auto dir = scratch_dir("xcnn_cfg_bad");
    auto bp = write_blueprint(dir);
    auto expect_config_error = [](const std::string& text) {
        try {
            parse_experiment_config(text);
            FAIL_CHECK("expected a config error");
        } catch (const Error& e) {
            CHECK(e.exit_code() == 2);
        }
    };
    expect_config_error("{}");
    expect_config_error("not json");
    json bad = json::parse(minimal_config(bp));
    bad["retention_p"] = {0.0};
    expect_config_error(bad.dump());
    bad = json::parse(minimal_config(bp));
    bad["retention_p"] = {120.0};
    expect_config_error(bad.dump());
    bad = json::parse(minimal_config(bp));
    bad["seeds"] = json::array();
    expect_config_error(bad.dump());
    bad = json::parse(minimal_config(bp));
    bad["transform"] = {{"drop_threshold", 0.7}};
    expect_config_error(bad.dump());
}

TEST_CASE("t-quantile: known two-sided 95 percent values") {
    CHECK(t_quantile_95(2) == doctest::Approx(12.706));
    CHECK(t_quantile_95(5) == doctest::Approx(2.776));
    CHECK(t_quantile_95(6) == doctest::Approx(2.571));
    CHECK(t_quantile_95(100) == doctest::Approx(1.96));
}

TEST_CASE("metrics CSV round-trips exact values") {
    auto dir = scratch_dir("xcnn_metrics_rt");
    std::vector<MetricsRow> rows;
    Rng rng(3);
    for (int i = 0; i < 7; ++i) {
        MetricsRow r;
        r.model = i % 2 ? "base" : "xcnn";
        r.retention_p = 20.0 * (1 + i % 5);
        r.seed = i;
        r.epochs = 30;
        r.final_val_accuracy = rng.uniform();
        r.best_val_accuracy = rng.uniform();
        r.final_train_loss = rng.uniform() * 2.3;
        rows.push_back(r);
    }
    append_metrics(dir / "metrics.csv", rows);
    std::vector<MetricsRow> back = read_metrics(dir / "metrics.csv");
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].model == rows[i].model);
        CHECK(back[i].retention_p == rows[i].retention_p);
        CHECK(back[i].seed == rows[i].seed);
        CHECK(back[i].final_val_accuracy == rows[i].final_val_accuracy);
        CHECK(back[i].best_val_accuracy == rows[i].best_val_accuracy);
        CHECK(back[i].final_train_loss == rows[i].final_train_loss);
    }
}

TEST_CASE("report: two models x three retentions, CI against hand computation") {
    auto dir = scratch_dir("xcnn_report");
    std::vector<MetricsRow> rows;
    // model "a" at p=20: accs {0.70, 0.72, 0.74, 0.71, 0.73}; mean 0.72
    const std::vector<double> accs{0.70, 0.72, 0.74, 0.71, 0.73};
    for (size_t i = 0; i < accs.size(); ++i) {
        MetricsRow r;
        r.model = "a";
        r.retention_p = 20;
        r.seed = i;
        r.final_val_accuracy = accs[i];
        rows.push_back(r);
    }
    for (const std::string& model : {std::string("a"), std::string("b")})
        for (double p : {40.0, 60.0})
            for (int s = 0; s < 3; ++s) {
                MetricsRow r;
                r.model = model;
                r.retention_p = p;
                r.seed = s;
                r.final_val_accuracy = 0.5 + 0.01 * s;
                rows.push_back(r);
            }
    append_metrics(dir / "metrics.csv", rows);
    run_report(dir);

    // hand: mean 0.72, s = sqrt(sum((x-mean)^2)/4) = sqrt(0.001/4) = 0.0158114,
    // CI = 2.776 * s / sqrt(5) = 0.0196293
    std::ifstream csv(dir / "report.csv");
    std::string line;
    std::getline(csv, line);  // header
    bool found = false;
    while (std::getline(csv, line)) {
        if (line.rfind("a,20.0,", 0) == 0) {
            found = true;
            std::istringstream ss(line);
            std::string f;
            std::getline(ss, f, ',');
            std::getline(ss, f, ',');
            std::getline(ss, f, ',');
            CHECK(f == "5");
            std::getline(ss, f, ',');
            CHECK(std::stod(f) == doctest::Approx(0.72).epsilon(1e-12));
            std::getline(ss, f, ',');
            CHECK(std::stod(f) == doctest::Approx(2.776 * 0.015811388300841896 /
                                                  std::sqrt(5.0)).epsilon(1e-9));
        }
    }
    CHECK(found);
    CHECK(std::filesystem::exists(dir / "report.txt"));

    // the CSV re-parses to the same values it was written from
    std::vector<MetricsRow> back = read_metrics(dir / "metrics.csv");
    CHECK(back.size() == rows.size());
}

TEST_CASE("report: directory without metrics is a config error") {
    auto dir = scratch_dir("xcnn_report_empty");
    try {
        run_report(dir);
        FAIL_CHECK("expected error");
    } catch (const Error& e) {
        CHECK(e.exit_code() == 2);
    }
}

TEST_CASE("run_probe writes a deterministic report with ordered scores") {
    auto dir = scratch_dir("xcnn_run_probe");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["transform"] = {{"probe_epochs", 3}, {"seed", 4}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());

    run_probe(cfg, dir / "out1");
    run_probe(cfg, dir / "out2");

    auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(read(dir / "out1/probe_report.json") == read(dir / "out2/probe_report.json"));

    json report = json::parse(read(dir / "out1/probe_report.json"));
    CHECK(report.at("scores").at("m0").get<double>() >
          report.at("scores").at("m1").get<double>());
    CHECK(std::filesystem::exists(dir / "out1/effective_config.json"));
    CHECK(std::filesystem::exists(dir / "out1/run_meta.json"));
}

TEST_CASE("run_transform emits a re-parsable xblueprint and a parameter report") {
    auto dir = scratch_dir("xcnn_run_transform");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["transform"] = {{"probe_epochs", 3}, {"seed", 1}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());
    run_transform(cfg, dir / "out");

    std::ifstream in(dir / "out/xblueprint.json");
    std::ostringstream ss;
    ss << in.rdbuf();
    XBlueprint x = parse_xblueprint(ss.str());
    CHECK(x.modality_order.size() == 2);

    std::ifstream rin(dir / "out/transform_report.json");
    json report = json::parse(rin);
    CHECK(report.at("parameters").contains("base"));
    CHECK(report.at("parameters").contains("xcnn"));
    CHECK(report.at("parameters").at("base").get<int64_t>() ==
          parameter_count(fixtures::desknet(5, 2)));
}

TEST_CASE("run_train covers the retention sweep for base and xblueprint documents") {
    auto dir = scratch_dir("xcnn_run_train");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["retention_p"] = {50, 100};
    cfg_json["seeds"] = {0, 1};
    cfg_json["train"] = {{"epochs", 2}};
    cfg_json["transform"] = {{"probe_epochs", 2}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());

    run_train(cfg, {}, dir / "base_run");
    std::vector<MetricsRow> rows = read_metrics(dir / "base_run/metrics.csv");
    CHECK(rows.size() == 4);  // 2 retentions x 2 seeds
    for (const MetricsRow& r : rows) {
        CHECK(r.model == "base");
        CHECK(r.final_val_accuracy >= 0.0);
        CHECK(r.final_val_accuracy <= 1.0);
    }
    CHECK(std::filesystem::exists(dir / "base_run/base_p50_s0.params"));
    CHECK(std::filesystem::exists(dir / "base_run/history_base_p100_s1.csv"));

    // transformed model document through the same sweep
    run_transform(cfg, dir / "tf");
    run_train(cfg, dir / "tf/xblueprint.json", dir / "x_run");
    std::vector<MetricsRow> xrows = read_metrics(dir / "x_run/metrics.csv");
    CHECK(xrows.size() == 4);
    for (const MetricsRow& r : xrows) CHECK(r.model == "xblueprint");

    // report over the two run directories
    run_report(dir);
    CHECK(std::filesystem::exists(dir / "report.csv"));
}

TEST_CASE("run_train is reproducible byte for byte, timestamps confined to the sidecar") {
    auto dir = scratch_dir("xcnn_run_repro");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["retention_p"] = {100};
    cfg_json["seeds"] = {3};
    cfg_json["train"] = {{"epochs", 2}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());

    run_train(cfg, {}, dir / "r1");
    run_train(cfg, {}, dir / "r2");
    auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(read(dir / "r1/metrics.csv") == read(dir / "r2/metrics.csv"));
    CHECK(read(dir / "r1/base_p100_s3.params") == read(dir / "r2/base_p100_s3.params"));
    CHECK(read(dir / "r1/history_base_p100_s3.csv") ==
          read(dir / "r2/history_base_p100_s3.csv"));
}

TEST_CASE("parallel fan-out produces the same outputs as the serial path") {
    auto dir = scratch_dir("xcnn_run_parallel");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["retention_p"] = {50, 100};
    cfg_json["seeds"] = {0, 1};
    cfg_json["train"] = {{"epochs", 2}};
    ExperimentConfig serial_cfg = parse_experiment_config(cfg_json.dump());
    cfg_json["parallel"] = 2;
    ExperimentConfig parallel_cfg = parse_experiment_config(cfg_json.dump());

    run_train(serial_cfg, {}, dir / "serial");
    run_train(parallel_cfg, {}, dir / "parallel");
    auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(read(dir / "serial/metrics.csv") == read(dir / "parallel/metrics.csv"));
}

TEST_CASE("retention sweep: more data does not hurt, averaged over seeds") {
    auto dir = scratch_dir("xcnn_run_retention");
    std::ofstream(dir / "blueprint.json") << serialize_blueprint(fixtures::desknet(4, 2));
    json cfg_json;
    cfg_json["blueprint"] = (dir / "blueprint.json").string();
    cfg_json["dataset"] = {
        {"synthetic", {{"n", 800}, {"classes", 4}, {"strengths", {0.8, 0.3}},
                       {"noise_sigma", 1.2}}}};
    cfg_json["retention_p"] = {20, 100};
    cfg_json["seeds"] = {0, 1, 2, 3, 4};
    cfg_json["train"] = {{"epochs", 6}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());
    run_train(cfg, {}, dir / "run");
    std::vector<MetricsRow> rows = read_metrics(dir / "run/metrics.csv");
    REQUIRE(rows.size() == 10);
    double acc20 = 0.0, acc100 = 0.0;
    for (const MetricsRow& r : rows)
        (r.retention_p == 20 ? acc20 : acc100) += r.final_val_accuracy / 5.0;
    CHECK(acc100 >= acc20 - 0.02);
}

TEST_CASE("prepare_data: yuv requires an RGB dataset") {
    auto dir = scratch_dir("xcnn_prepare");
    auto bp = write_blueprint(dir);
    json cfg_json = json::parse(minimal_config(bp));
    cfg_json["modalities"] = "yuv";
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());
    CHECK_THROWS_AS(prepare_data(cfg), Error);
}

TEST_CASE("missing files map to data errors (exit code 3)") {
    auto dir = scratch_dir("xcnn_missing");
    json cfg_json;
    cfg_json["blueprint"] = (dir / "nope.json").string();
    cfg_json["dataset"] = {{"synthetic", {{"n", 60}, {"classes", 3}}}};
    ExperimentConfig cfg = parse_experiment_config(cfg_json.dump());
    try {
        run_probe(cfg, dir / "out");
        FAIL_CHECK("expected error");
    } catch (const Error& e) {
        CHECK(e.exit_code() == 3);
    }

    json cifar_cfg;
    cifar_cfg["blueprint"] = (dir / "nope.json").string();
    std::ofstream(dir / "bp.json") << serialize_blueprint(fixtures::desknet(3, 3));
    cifar_cfg["blueprint"] = (dir / "bp.json").string();
    cifar_cfg["dataset"] = {{"cifar10", (dir / "missing_dir").string()}};
    ExperimentConfig cfg2 = parse_experiment_config(cifar_cfg.dump());
    try {
        run_probe(cfg2, dir / "out2");
        FAIL_CHECK("expected error");
    } catch (const Error& e) {
        CHECK(e.exit_code() == 3);
    }
}
