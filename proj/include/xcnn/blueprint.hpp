// SPDX-License-Identifier: Apache-2.0
//
// Model IR: blueprint graphs, validation, shape inference, parameter
// accounting, insertion-point detection and canonical JSON serialization.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xcnn/common.hpp"

namespace xcnn {

enum class LayerKind { conv, pool, flatten, dense, dropout, batchnorm, add, concat };
enum class Padding { same, valid };
enum class Activation { none, relu };
enum class PoolMode { max, avg };

const char* to_string(LayerKind k);
const char* to_string(Padding p);
const char* to_string(Activation a);
const char* to_string(PoolMode m);

// One node of a blueprint graph. Fields beyond the node's kind are ignored.
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::conv;

    // conv
    int kernel_count = 0;
    std::array<int, 2> kernel_hw{3, 3};
    std::array<int, 2> stride{1, 1};
    Padding padding = Padding::same;
    Activation activation = Activation::none;

    // pool
    std::array<int, 2> window{2, 2};
    std::array<int, 2> pool_stride{2, 2};
    PoolMode pool_mode = PoolMode::max;

    // dense
    int units = 0;

    // dropout
    double rate = 0.0;

    // batchnorm
    double epsilon = 1e-3;

    std::vector<std::string> predecessors;

    bool operator==(const LayerSpec&) const = default;
};

struct Shape {
    int h = 0, w = 0, c = 0;
    bool operator==(const Shape&) const = default;
};

// Immutable after construction. Also used for extractor/classifier/super-layer
// fragments: a fragment is a blueprint whose single entry node reads the
// fragment input (input_shape) and whose boundary field is unset.
struct Blueprint {
    Shape input_shape;
    std::map<std::string, LayerSpec> nodes;
    std::string output_id;
    std::string classifier_boundary;  // empty = unset

    bool operator==(const Blueprint&) const = default;
};

struct CrossConnection {
    std::string src_modality;
    std::string dst_modality;
    int depth_index = 0;
    double weight = 0.0;
    int projection_channels = 0;  // 0 <=> dropped

    bool dropped() const { return projection_channels == 0; }
    bool operator==(const CrossConnection&) const = default;
};

struct XBlueprint {
    std::vector<std::string> modality_order;
    std::map<std::string, Blueprint> superlayers;  // node ids namespaced "<modality>/<id>"
    std::vector<std::string> insertion_points;     // base node ids, indexed by depth
    std::vector<CrossConnection> connections;
    Blueprint classifier;  // shared; entry consumes concat of super-layer outputs

    bool operator==(const XBlueprint&) const = default;
};

// --- flat executable form -------------------------------------------------
//
// Both Blueprint and XBlueprint lower to a single flat graph with explicit
// input nodes; relu appears as a standalone op only in lowered connection
// sub-graphs. Shape inference and parameter accounting run on this form,
// and the tensor engine compiles it directly.

enum class OpKind { input, conv, pool, flatten, dense, dropout, batchnorm, add, concat, relu };

struct LoweredNode {
    std::string id;
    OpKind kind = OpKind::input;
    LayerSpec spec;           // hyperparameters for non-input ops
    std::vector<int> inputs;  // indices into LoweredGraph::nodes
    int input_slot = -1;      // for OpKind::input
};

struct LoweredGraph {
    std::vector<std::string> input_names;  // per slot; "input" for plain blueprints
    std::vector<Shape> input_shapes;
    std::vector<LoweredNode> nodes;  // topologically ordered
    int output_index = -1;
};

// --- operations -------------------------------------------------------------

// Throws Error(config) with a field-level path on schema violations.
Blueprint parse_blueprint(const std::string& document);
XBlueprint parse_xblueprint(const std::string& document);
bool document_is_xblueprint(const std::string& document);

std::string serialize_blueprint(const Blueprint& b);
std::string serialize_blueprint(const XBlueprint& x);

// Full structural validation: single entry/exit DAG, resolvable predecessors,
// kind invariants, shape inference, boundary dominance.
void validate(const Blueprint& b);
void validate(const XBlueprint& x);

// Deterministic topological order (ready node with smallest id first).
std::vector<std::string> topo_order(const Blueprint& b);

std::map<std::string, Shape> infer_shapes(const Blueprint& b);
std::vector<Shape> infer_shapes(const LoweredGraph& g);

LoweredGraph lower(const Blueprint& b);
LoweredGraph lower(const XBlueprint& x);

int64_t parameter_count(const LoweredGraph& g);
int64_t parameter_count(const Blueprint& b);
int64_t parameter_count(const XBlueprint& x);

// Block-end nodes usable as cross-connection depths, in topological order,
// restricted to the extractor; the last one (whose output already feeds the
// shared classifier merge) is removed. Throws Error(config) when empty.
std::vector<std::string> find_insertion_points(const Blueprint& b);

// Explicit boundary, or the first flatten / global-pool node.
std::string resolve_classifier_boundary(const Blueprint& b);

struct SplitBlueprint {
    Blueprint extractor;   // output_id = the boundary's predecessor
    Blueprint classifier;  // entry = boundary node, predecessors cleared
};
SplitBlueprint split_at_classifier(const Blueprint& b);

}  // namespace xcnn
