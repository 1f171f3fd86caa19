// SPDX-License-Identifier: Apache-2.0
//
// Command line surface: probe, transform, train, iterate, report.
// Exit codes: 0 ok, 1 internal error, 2 config error, 3 data error,
// 4 training error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xcnn/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    std::optional<int> parallel;
};

xcnn::ExperimentConfig load_config(const CommonArgs& args) {
    xcnn::ExperimentConfig cfg = xcnn::load_experiment_config(args.config_path);
    if (args.seed) {
        cfg.transform.seed = *args.seed;
        cfg.iterative.seed = *args.seed;
        cfg.seeds = {*args.seed};
    }
    if (args.parallel) {
        cfg.parallel = *args.parallel;
        cfg.transform.parallel = *args.parallel;
    }
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", args.seed, "override every seed in the config");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config output_dir)");
    cmd->add_option("--parallel", args.parallel, "max concurrent trainings");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal CNN topology compiler"};
    app.require_subcommand(1);

    CommonArgs probe_args, transform_args, train_args, iterate_args;
    std::string train_model_path;
    bool iterate_resume = false;
    std::string report_dir;

    CLI::App* probe = app.add_subcommand("probe", "measure per-modality informativeness");
    add_common(probe, probe_args);

    CLI::App* transform =
        app.add_subcommand("transform", "build an X-CNN topology from the base blueprint");
    add_common(transform, transform_args);

    CLI::App* train_cmd = app.add_subcommand(
        "train", "train a model document over the retention sweep and all seeds");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--model", train_model_path,
                          "blueprint or xblueprint document (default: config blueprint)");

    CLI::App* iterate_cmd =
        app.add_subcommand("iterate", "combined learning over X-CNN generations");
    add_common(iterate_cmd, iterate_args);
    iterate_cmd->add_flag("--resume", iterate_resume,
                          "continue a partial run directory from its last generation");

    CLI::App* report =
        app.add_subcommand("report", "consolidate metrics.csv files into comparison tables");
    report->add_option("--out", report_dir, "directory holding run outputs")->required();

    try {
        app.parse(argc, argv);

        if (probe->parsed()) {
            xcnn::ExperimentConfig cfg = load_config(probe_args);
            xcnn::run_probe(cfg, cfg.output_dir);
        } else if (transform->parsed()) {
            xcnn::ExperimentConfig cfg = load_config(transform_args);
            xcnn::run_transform(cfg, cfg.output_dir);
        } else if (train_cmd->parsed()) {
            xcnn::ExperimentConfig cfg = load_config(train_args);
            xcnn::run_train(cfg, train_model_path, cfg.output_dir);
        } else if (iterate_cmd->parsed()) {
            xcnn::ExperimentConfig cfg = load_config(iterate_args);
            xcnn::run_iterate(cfg, cfg.output_dir, iterate_resume);
        } else if (report->parsed()) {
            xcnn::run_report(report_dir);
            std::cout << "wrote " << report_dir << "/report.txt and report.csv\n";
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad usage is a config error
    } catch (const xcnn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
