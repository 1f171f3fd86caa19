// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: config file parsing with full defaulting, the
// probe/transform/train/iterate pipelines, metrics CSVs and comparison tables.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xcnn/data.hpp"
#include "xcnn/iterative.hpp"
#include "xcnn/transform.hpp"

namespace xcnn {

struct DatasetSpec {
    enum class Kind { cifar10, synthetic };
    Kind kind = Kind::synthetic;
    std::string path;       // cifar10: file or directory of .bin batches
    SynthConfig synth;
    uint64_t synth_seed = 0;  // dataset generation seed, fixed across run seeds
};

struct ExperimentConfig {
    std::string blueprint_path;
    DatasetSpec dataset;
    bool modalities_yuv = false;
    std::vector<ModalitySpec> modalities;  // explicit specs; empty with yuv or synthetic
    std::vector<double> retention_p{20, 40, 60, 80, 100};
    TransformConfig transform;
    TrainConfig train;
    IterConfig iterative;
    std::vector<uint64_t> seeds{0};
    std::string output_dir = "out";
    int parallel = 1;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Every effective value after defaulting, plus the fixed protocol rules.
std::string effective_config_json(const ExperimentConfig& cfg);

struct PreparedData {
    LabeledDataset full;  // color-transformed when modalities are YUV
    std::vector<ModalitySpec> specs;
    ModalViews views;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

Blueprint load_blueprint_file(const std::filesystem::path& path);

// Pipeline entry points shared by the CLI and tests. Each writes its outputs
// plus run_meta.json (the only file that may carry timestamps) into out_dir.
void run_probe(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void run_transform(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Trains the blueprint or X-blueprint document at model_path (empty: the
// config's base blueprint) over the retention sweep and all seeds; appends to
// out_dir/metrics.csv.
void run_train(const ExperimentConfig& cfg, const std::filesystem::path& model_path,
               const std::filesystem::path& out_dir);

void run_iterate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                 bool resume);

// Consolidates metrics.csv files under dir into report.txt / report.csv with
// mean and 95% Student-t intervals over seeds.
void run_report(const std::filesystem::path& dir);

// --- small shared utilities ---------------------------------------------------

// Shortest round-trip decimal form (deterministic, re-parses exactly).
std::string format_double(double v);

// Two-sided 95% Student-t quantile for n samples (df = n - 1).
double t_quantile_95(int n);

struct MetricsRow {
    std::string model;
    double retention_p = 100.0;
    uint64_t seed = 0;
    int epochs = 0;
    double final_val_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    double final_train_loss = 0.0;
};

void append_metrics(const std::filesystem::path& csv_path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& csv_path);

}  // namespace xcnn
