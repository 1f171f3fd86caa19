// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: hand-written blueprint documents, the small training
// network used for synthetic-data runs, and a random valid-blueprint
// generator for round-trip and parameter-count property tests.
#pragma once

#include <string>

#include "xcnn/blueprint.hpp"
#include "xcnn/common.hpp"

namespace fixtures {

// Four-node minimal chain over an 8x8x3 input.
inline std::string mini_chain_json() {
    return R"({
  "format_version": 1,
  "input_shape": [8, 8, 3],
  "nodes": [
    {"id": "conv1", "kind": "conv",
     "params": {"kernel_count": 32, "kernel_hw": [3, 3], "padding": "same",
                "activation": "relu"}, "inputs": []},
    {"id": "pool1", "kind": "pool", "params": {"window": [2, 2]}, "inputs": ["conv1"]},
    {"id": "flat", "kind": "flatten", "params": {}, "inputs": ["pool1"]},
    {"id": "fc", "kind": "dense", "params": {"units": 10}, "inputs": ["flat"]}
  ],
  "output": "fc"
})";
}

// Twelve-node stack: conv,conv,pool,dropout,conv,conv,pool,dropout,
// flatten,dense,dropout,dense over 32x32x3. Boundary left unset; the first
// flatten is the default.
inline std::string stacknet_json() {
    return R"({
  "format_version": 1,
  "input_shape": [32, 32, 3],
  "nodes": [
    {"id": "conv1", "kind": "conv",
     "params": {"kernel_count": 32, "kernel_hw": [3, 3], "padding": "same",
                "activation": "relu"}, "inputs": []},
    {"id": "conv2", "kind": "conv",
     "params": {"kernel_count": 32, "kernel_hw": [3, 3], "padding": "valid",
                "activation": "relu"}, "inputs": ["conv1"]},
    {"id": "pool1", "kind": "pool", "params": {"window": [2, 2]}, "inputs": ["conv2"]},
    {"id": "drop1", "kind": "dropout", "params": {"rate": 0.25}, "inputs": ["pool1"]},
    {"id": "conv3", "kind": "conv",
     "params": {"kernel_count": 64, "kernel_hw": [3, 3], "padding": "same",
                "activation": "relu"}, "inputs": ["drop1"]},
    {"id": "conv4", "kind": "conv",
     "params": {"kernel_count": 64, "kernel_hw": [3, 3], "padding": "valid",
                "activation": "relu"}, "inputs": ["conv3"]},
    {"id": "pool2", "kind": "pool", "params": {"window": [2, 2]}, "inputs": ["conv4"]},
    {"id": "drop2", "kind": "dropout", "params": {"rate": 0.25}, "inputs": ["pool2"]},
    {"id": "flat", "kind": "flatten", "params": {}, "inputs": ["drop2"]},
    {"id": "fc1", "kind": "dense", "params": {"units": 512, "activation": "relu"},
     "inputs": ["flat"]},
    {"id": "drop3", "kind": "dropout", "params": {"rate": 0.5}, "inputs": ["fc1"]},
    {"id": "fc2", "kind": "dense", "params": {"units": 10}, "inputs": ["drop3"]}
  ],
  "output": "fc2"
})";
}

// conv -> add(skip) -> pool residual fragment, then classifier.
inline std::string residual_json() {
    return R"({
  "format_version": 1,
  "input_shape": [8, 8, 4],
  "nodes": [
    {"id": "conv1", "kind": "conv",
     "params": {"kernel_count": 4, "kernel_hw": [3, 3], "padding": "same",
                "activation": "relu"}, "inputs": []},
    {"id": "branch", "kind": "conv",
     "params": {"kernel_count": 4, "kernel_hw": [3, 3], "padding": "same",
                "activation": "relu"}, "inputs": ["conv1"]},
    {"id": "merge", "kind": "add", "params": {}, "inputs": ["conv1", "branch"]},
    {"id": "pool1", "kind": "pool", "params": {"window": [2, 2]}, "inputs": ["merge"]},
    {"id": "flat", "kind": "flatten", "params": {}, "inputs": ["pool1"]},
    {"id": "fc", "kind": "dense", "params": {"units": 10}, "inputs": ["flat"]}
  ],
  "output": "fc"
})";
}

// Small two-block network for desk-scale training on synthetic 8x8 inputs.
inline xcnn::Blueprint desknet(int classes, int input_channels, int height = 8, int width = 8) {
    using namespace xcnn;
    Blueprint b;
    b.input_shape = {height, width, input_channels};
    auto conv = [](std::string id, int kernels, std::vector<std::string> preds) {
        LayerSpec s;
        s.id = std::move(id);
        s.kind = LayerKind::conv;
        s.kernel_count = kernels;
        s.kernel_hw = {3, 3};
        s.padding = Padding::same;
        s.activation = Activation::relu;
        s.predecessors = std::move(preds);
        return s;
    };
    auto pool = [](std::string id, std::vector<std::string> preds) {
        LayerSpec s;
        s.id = std::move(id);
        s.kind = LayerKind::pool;
        s.window = {2, 2};
        s.pool_stride = {2, 2};
        s.predecessors = std::move(preds);
        return s;
    };
    LayerSpec flat;
    flat.id = "flat";
    flat.kind = LayerKind::flatten;
    flat.predecessors = {"pool2"};
    LayerSpec fc1;
    fc1.id = "fc1";
    fc1.kind = LayerKind::dense;
    fc1.units = 32;
    fc1.activation = Activation::relu;
    fc1.predecessors = {"flat"};
    LayerSpec fc2;
    fc2.id = "fc2";
    fc2.kind = LayerKind::dense;
    fc2.units = classes;
    fc2.predecessors = {"fc1"};

    for (LayerSpec s : {conv("conv1", 12, {}), pool("pool1", {"conv1"}),
                        conv("conv2", 16, {"pool1"}), pool("pool2", {"conv2"}), flat, fc1, fc2})
        b.nodes.emplace(s.id, std::move(s));
    b.output_id = "fc2";
    validate(b);
    return b;
}

// Random valid blueprint: conv blocks with optional batchnorm/dropout/residual
// merges and pooling, then flatten + dense head.
inline xcnn::Blueprint random_blueprint(xcnn::Rng& rng) {
    using namespace xcnn;
    Blueprint b;
    int h = 6 + static_cast<int>(rng.below(9));
    int w = 6 + static_cast<int>(rng.below(9));
    int channels = 1 + static_cast<int>(rng.below(3));
    b.input_shape = {h, w, channels};

    int counter = 0;
    std::string prev;
    auto push = [&](LayerSpec s) {
        if (!prev.empty() && s.predecessors.empty()) s.predecessors = {prev};
        prev = s.id;
        b.nodes.emplace(s.id, std::move(s));
    };
    auto next_id = [&](const char* stem) { return std::string(stem) + std::to_string(counter++); };

    const int blocks = 1 + static_cast<int>(rng.below(2));
    for (int blk = 0; blk < blocks; ++blk) {
        const int convs = 1 + static_cast<int>(rng.below(2));
        for (int ci = 0; ci < convs; ++ci) {
            LayerSpec s;
            s.id = next_id("conv");
            s.kind = LayerKind::conv;
            s.kernel_count = 2 + static_cast<int>(rng.below(10));
            const int k = 1 + static_cast<int>(rng.below(3));
            s.kernel_hw = {k, k};
            s.activation = rng.below(2) ? Activation::relu : Activation::none;
            if (rng.below(3) == 0 && h > k && w > k) {
                s.padding = Padding::valid;
                h = h - k + 1;
                w = w - k + 1;
            } else {
                s.padding = Padding::same;
            }
            channels = s.kernel_count;
            push(std::move(s));
        }
        if (rng.below(3) == 0) {
            LayerSpec s;
            s.id = next_id("bn");
            s.kind = LayerKind::batchnorm;
            push(std::move(s));
        }
        if (rng.below(4) == 0) {
            LayerSpec s;
            s.id = next_id("drop");
            s.kind = LayerKind::dropout;
            s.rate = 0.1 + 0.4 * rng.uniform();
            push(std::move(s));
        }
        if (rng.below(3) == 0) {
            // residual: branch conv preserving shape, merged with add
            LayerSpec branch;
            branch.id = next_id("branch");
            branch.kind = LayerKind::conv;
            branch.kernel_count = channels;
            branch.kernel_hw = {3, 3};
            branch.padding = Padding::same;
            branch.activation = Activation::relu;
            branch.predecessors = {prev};
            LayerSpec merge;
            merge.id = next_id("merge");
            merge.kind = LayerKind::add;
            merge.predecessors = {prev, branch.id};
            b.nodes.emplace(branch.id, std::move(branch));
            push(std::move(merge));
        }
        if (h >= 3 && w >= 3) {
            LayerSpec s;
            s.id = next_id("pool");
            s.kind = LayerKind::pool;
            s.window = {2, 2};
            s.pool_stride = {2, 2};
            s.pool_mode = rng.below(2) ? PoolMode::max : PoolMode::avg;
            h = (h - 2) / 2 + 1;
            w = (w - 2) / 2 + 1;
            push(std::move(s));
        }
    }
    {
        LayerSpec s;
        s.id = next_id("flat");
        s.kind = LayerKind::flatten;
        push(std::move(s));
    }
    if (rng.below(2)) {
        LayerSpec s;
        s.id = next_id("fc");
        s.kind = LayerKind::dense;
        s.units = 4 + static_cast<int>(rng.below(24));
        s.activation = Activation::relu;
        push(std::move(s));
    }
    {
        LayerSpec s;
        s.id = next_id("fc");
        s.kind = LayerKind::dense;
        s.units = 2 + static_cast<int>(rng.below(9));
        push(std::move(s));
    }
    b.output_id = prev;
    validate(b);
    return b;
}

}  // namespace fixtures
