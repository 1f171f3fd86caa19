// SPDX-License-Identifier: Apache-2.0
//
// The base transform: measure per-modality informativeness with width-reduced
// probe models, derive super-layer scales and connection weights from the
// scores, place cross-connections at block ends, and assemble the X-CNN.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xcnn/blueprint.hpp"
#include "xcnn/data.hpp"
#include "xcnn/engine.hpp"

namespace xcnn {

struct TransformConfig {
    double alpha = 1.0;           // informativeness priority for super-layer scales
    double beta = 2.0;            // informativeness discounting for connection weights
    int probe_epochs = 8;
    double internal_split = 0.8;  // train share of the internal split
    double drop_threshold = 0.05;
    int probe_seeds = 1;          // > 1 averages scores over seeds
    uint64_t seed = 0;
    int parallel = 1;
    TrainConfig probe_train;      // epochs/seed fields are managed per probe
};

void validate(const TransformConfig& cfg);

struct InformativenessReport {
    std::map<std::string, double> scores;          // best probe validation accuracy
    std::map<std::string, History> probe_histories;
    int class_count = 0;

    // Scores are floored at chance before entering the scale/weight formulas.
    double floored(const std::string& modality) const;
};

struct ScalePlan {
    std::map<std::string, double> scales;  // sums to 1
};

struct WeightMatrix {
    std::map<std::pair<std::string, std::string>, double> w;

    double at(const std::string& src, const std::string& dst) const { return w.at({src, dst}); }
    void set(const std::string& src, const std::string& dst, double v) { w[{src, dst}] = v; }
};

// Probe model: input restricted to `in_channels`, every conv kernel count and
// every extractor dense width scaled by 1/n_modalities (floored at 1).
Blueprint scale_probe(const Blueprint& b, int n_modalities, int in_channels);

InformativenessReport measure_informativeness(const Blueprint& b, const ModalViews& modal_data,
                                              const TransformConfig& cfg);

ScalePlan compute_scales(const InformativenessReport& report, double alpha);

WeightMatrix compute_connection_weights(const InformativenessReport& report, double beta);

// Per-modality copies of the extractor, widths scaled, node ids namespaced
// "<modality>/<id>", input channels set per modality.
std::map<std::string, Blueprint> build_superlayers(
    const Blueprint& extractor, const ScalePlan& plan,
    const std::vector<std::pair<std::string, int>>& modal_channels);

// Complete digraph per depth; weights under the threshold are emitted as
// dropped connections (projection_channels 0).
std::vector<CrossConnection> place_connections(
    const std::map<std::string, Blueprint>& superlayers,
    const std::vector<std::string>& modality_order,
    const std::vector<std::string>& insertion_points, const WeightMatrix& weights,
    double drop_threshold);

XBlueprint assemble_xcnn(std::map<std::string, Blueprint> superlayers,
                         std::vector<std::string> modality_order,
                         std::vector<std::string> insertion_points,
                         std::vector<CrossConnection> connections, Blueprint classifier);

struct TransformResult {
    XBlueprint xblueprint;
    InformativenessReport report;
    ScalePlan scales;
    WeightMatrix weights;
    std::vector<std::string> insertion_points;
    int64_t base_parameters = 0;
    int64_t x_parameters = 0;
};

// Topology-only pipeline for externally supplied scores.
TransformResult build_xcnn(const Blueprint& b, const InformativenessReport& report,
                           const std::vector<std::pair<std::string, int>>& modal_channels,
                           const TransformConfig& cfg);

// The full data-driven transform.
TransformResult transform(const Blueprint& b, const ModalViews& modal_data,
                          const TransformConfig& cfg);

std::string transform_report_json(const TransformResult& result);

}  // namespace xcnn
