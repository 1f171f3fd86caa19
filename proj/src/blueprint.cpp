// SPDX-License-Identifier: Apache-2.0

#include "xcnn/blueprint.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace xcnn {

using json = nlohmann::json;

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
        case LayerKind::dropout: return "dropout";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::add: return "add";
        case LayerKind::concat: return "concat";
    }
    return "?";
}

const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }
const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }
const char* to_string(PoolMode m) { return m == PoolMode::max ? "max" : "avg"; }

namespace {

LayerKind layer_kind_from(const std::string& s, const std::string& path) {
    if (s == "conv") return LayerKind::conv;
    if (s == "pool") return LayerKind::pool;
    if (s == "flatten") return LayerKind::flatten;
    if (s == "dense") return LayerKind::dense;
    if (s == "dropout") return LayerKind::dropout;
    if (s == "batchnorm") return LayerKind::batchnorm;
    if (s == "add") return LayerKind::add;
    if (s == "concat") return LayerKind::concat;
    throw config_error(path + ": unknown layer kind \"" + s + "\"");
}

// The namespace separator '/' is reserved for super-layer fragments.
bool valid_identifier(const std::string& id, bool allow_namespace) {
    if (id.empty()) return false;
    for (char c : id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')
            continue;
        if (c == '/' && allow_namespace) continue;
        return false;
    }
    return true;
}

const json& require_field(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw config_error(path + "." + key + ": missing required field");
    return *it;
}

int require_int(const json& j, const char* key, const std::string& path, int min_value) {
    const json& v = require_field(j, key, path);
    if (!v.is_number_integer())
        throw config_error(path + "." + key + ": expected integer");
    const int64_t value = v.get<int64_t>();
    if (value < min_value)
        throw config_error(path + "." + key + ": must be >= " + std::to_string(min_value));
    return static_cast<int>(value);
}

double require_number(const json& j, const char* key, const std::string& path) {
    const json& v = require_field(j, key, path);
    if (!v.is_number()) throw config_error(path + "." + key + ": expected number");
    return v.get<double>();
}

std::string require_string(const json& j, const char* key, const std::string& path) {
    const json& v = require_field(j, key, path);
    if (!v.is_string()) throw config_error(path + "." + key + ": expected string");
    return v.get<std::string>();
}

std::array<int, 2> require_int_pair(const json& j, const char* key, const std::string& path,
                                    int min_value) {
    const json& v = require_field(j, key, path);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw config_error(path + "." + key + ": expected [int, int]");
    std::array<int, 2> out{v[0].get<int>(), v[1].get<int>()};
    if (out[0] < min_value || out[1] < min_value)
        throw config_error(path + "." + key + ": entries must be >= " + std::to_string(min_value));
    return out;
}

void reject_unknown_keys(const json& params, std::initializer_list<const char*> allowed,
                         const std::string& path) {
    for (auto it = params.begin(); it != params.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known) throw config_error(path + "." + it.key() + ": unknown parameter");
    }
}

Activation activation_from(const json& params, const std::string& path) {
    if (!params.contains("activation")) return Activation::none;
    const std::string s = require_string(params, "activation", path);
    if (s == "relu") return Activation::relu;
    if (s == "none") return Activation::none;
    throw config_error(path + ".activation: expected \"relu\" or \"none\"");
}

LayerSpec parse_layer(const json& node, const std::string& path, bool allow_namespace) {
    LayerSpec spec;
    spec.id = require_string(node, "id", path);
    if (!valid_identifier(spec.id, allow_namespace))
        throw config_error(path + ".id: \"" + spec.id +
                           "\" is not a valid identifier ([A-Za-z0-9_.-]+)");
    spec.kind = layer_kind_from(require_string(node, "kind", path), path + ".kind");

    const json& params = node.contains("params") ? node.at("params") : json::object();
    if (!params.is_object()) throw config_error(path + ".params: expected object");
    const std::string ppath = path + ".params";

    switch (spec.kind) {
        case LayerKind::conv:
            reject_unknown_keys(params, {"kernel_count", "kernel_hw", "stride", "padding",
                                         "activation"}, ppath);
            spec.kernel_count = require_int(params, "kernel_count", ppath, 1);
            spec.kernel_hw = require_int_pair(params, "kernel_hw", ppath, 1);
            spec.stride = params.contains("stride") ? require_int_pair(params, "stride", ppath, 1)
                                                    : std::array<int, 2>{1, 1};
            if (params.contains("padding")) {
                const std::string p = require_string(params, "padding", ppath);
                if (p == "same") spec.padding = Padding::same;
                else if (p == "valid") spec.padding = Padding::valid;
                else throw config_error(ppath + ".padding: expected \"same\" or \"valid\"");
            }
            spec.activation = activation_from(params, ppath);
            break;
        case LayerKind::pool: {
            reject_unknown_keys(params, {"window", "stride", "mode"}, ppath);
            spec.window = require_int_pair(params, "window", ppath, 1);
            spec.pool_stride = params.contains("stride")
                                   ? require_int_pair(params, "stride", ppath, 1)
                                   : spec.window;
            const std::string m =
                params.contains("mode") ? require_string(params, "mode", ppath) : "max";
            if (m == "max") spec.pool_mode = PoolMode::max;
            else if (m == "avg") spec.pool_mode = PoolMode::avg;
            else throw config_error(ppath + ".mode: expected \"max\" or \"avg\"");
            break;
        }
        case LayerKind::dense:
            reject_unknown_keys(params, {"units", "activation"}, ppath);
            spec.units = require_int(params, "units", ppath, 1);
            spec.activation = activation_from(params, ppath);
            break;
        case LayerKind::dropout:
            reject_unknown_keys(params, {"rate"}, ppath);
            spec.rate = require_number(params, "rate", ppath);
            if (spec.rate < 0.0 || spec.rate > 1.0)
                throw config_error(ppath + ".rate: must be in [0, 1]");
            break;
        case LayerKind::batchnorm:
            reject_unknown_keys(params, {"epsilon"}, ppath);
            if (params.contains("epsilon")) {
                spec.epsilon = require_number(params, "epsilon", ppath);
                if (spec.epsilon <= 0.0) throw config_error(ppath + ".epsilon: must be > 0");
            }
            break;
        case LayerKind::flatten:
        case LayerKind::add:
        case LayerKind::concat:
            reject_unknown_keys(params, {}, ppath);
            break;
    }

    if (node.contains("inputs")) {
        const json& inputs = node.at("inputs");
        if (!inputs.is_array()) throw config_error(path + ".inputs: expected array");
        for (size_t i = 0; i < inputs.size(); ++i) {
            if (!inputs[i].is_string())
                throw config_error(path + ".inputs[" + std::to_string(i) + "]: expected string");
            spec.predecessors.push_back(inputs[i].get<std::string>());
        }
    }
    return spec;
}

Shape parse_shape(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3)
        throw config_error(path + ": expected [height, width, channels]");
    for (int i = 0; i < 3; ++i)
        if (!j[i].is_number_integer() || j[i].get<int>() < 1)
            throw config_error(path + "[" + std::to_string(i) + "]: expected positive integer");
    return Shape{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

Blueprint parse_fragment(const json& doc, const std::string& path,
                         bool allow_namespace = false) {
    Blueprint b;
    b.input_shape = parse_shape(require_field(doc, "input_shape", path), path + ".input_shape");
    const json& nodes = require_field(doc, "nodes", path);
    if (!nodes.is_array()) throw config_error(path + ".nodes: expected array");
    for (size_t i = 0; i < nodes.size(); ++i) {
        const std::string npath = path + ".nodes[" + std::to_string(i) + "]";
        if (!nodes[i].is_object()) throw config_error(npath + ": expected object");
        LayerSpec spec = parse_layer(nodes[i], npath, allow_namespace);
        if (b.nodes.count(spec.id))
            throw config_error(npath + ".id: duplicate node id \"" + spec.id + "\"");
        b.nodes.emplace(spec.id, std::move(spec));
    }
    b.output_id = require_string(doc, "output", path);
    if (doc.contains("classifier_boundary") && !doc.at("classifier_boundary").is_null()) {
        const json& cb = doc.at("classifier_boundary");
        if (!cb.is_string()) throw config_error(path + ".classifier_boundary: expected string");
        b.classifier_boundary = cb.get<std::string>();
    }
    return b;
}

json params_to_json(const LayerSpec& s) {
    json p = json::object();
    switch (s.kind) {
        case LayerKind::conv:
            p["kernel_count"] = s.kernel_count;
            p["kernel_hw"] = {s.kernel_hw[0], s.kernel_hw[1]};
            p["stride"] = {s.stride[0], s.stride[1]};
            p["padding"] = to_string(s.padding);
            p["activation"] = to_string(s.activation);
            break;
        case LayerKind::pool:
            p["window"] = {s.window[0], s.window[1]};
            p["stride"] = {s.pool_stride[0], s.pool_stride[1]};
            p["mode"] = to_string(s.pool_mode);
            break;
        case LayerKind::dense:
            p["units"] = s.units;
            p["activation"] = to_string(s.activation);
            break;
        case LayerKind::dropout:
            p["rate"] = s.rate;
            break;
        case LayerKind::batchnorm:
            p["epsilon"] = s.epsilon;
            break;
        default:
            break;
    }
    return p;
}

json fragment_to_json(const Blueprint& b) {
    json doc;
    doc["input_shape"] = {b.input_shape.h, b.input_shape.w, b.input_shape.c};
    json nodes = json::array();
    for (const std::string& id : topo_order(b)) {
        const LayerSpec& s = b.nodes.at(id);
        json n;
        n["id"] = s.id;
        n["kind"] = to_string(s.kind);
        n["params"] = params_to_json(s);
        n["inputs"] = s.predecessors;
        nodes.push_back(std::move(n));
    }
    doc["nodes"] = std::move(nodes);
    doc["output"] = b.output_id;
    return doc;
}

void check_version(const json& doc) {
    if (!doc.contains("format_version"))
        throw config_error("document: missing required field format_version");
    if (!doc.at("format_version").is_number_integer() || doc.at("format_version").get<int>() != 1)
        throw config_error("format_version: expected 1");
}

json parse_document(const std::string& document) {
    json doc = json::parse(document, nullptr, false);
    if (doc.is_discarded()) throw config_error("document: not valid JSON");
    if (!doc.is_object()) throw config_error("document: expected JSON object");
    return doc;
}

// Reachable set following successor edges from `from`.
std::set<std::string> descendants(const Blueprint& b, const std::string& from) {
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, spec] : b.nodes)
        for (const std::string& p : spec.predecessors) succ[p].push_back(id);
    std::set<std::string> seen{from};
    std::vector<std::string> stack{from};
    while (!stack.empty()) {
        std::string cur = stack.back();
        stack.pop_back();
        for (const std::string& nxt : succ[cur])
            if (seen.insert(nxt).second) stack.push_back(nxt);
    }
    return seen;
}

}  // namespace

std::vector<std::string> topo_order(const Blueprint& b) {
    std::map<std::string, int> pending;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, spec] : b.nodes) {
        pending[id] = static_cast<int>(spec.predecessors.size());
        for (const std::string& p : spec.predecessors) {
            if (!b.nodes.count(p))
                throw config_error("node \"" + id + "\": unknown input \"" + p + "\"");
            succ[p].push_back(id);
        }
    }
    std::set<std::string> ready;
    for (const auto& [id, n] : pending)
        if (n == 0) ready.insert(id);
    std::vector<std::string> order;
    order.reserve(b.nodes.size());
    while (!ready.empty()) {
        std::string id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (const std::string& s : succ[id])
            if (--pending[s] == 0) ready.insert(s);
    }
    if (order.size() != b.nodes.size()) throw config_error("node graph contains a cycle");
    return order;
}

LoweredGraph lower(const Blueprint& b) {
    LoweredGraph g;
    g.input_names = {"input"};
    g.input_shapes = {b.input_shape};
    std::map<std::string, int> index;
    LoweredNode in;
    in.id = "input";
    in.kind = OpKind::input;
    in.input_slot = 0;
    g.nodes.push_back(in);
    index["input"] = 0;

    for (const std::string& id : topo_order(b)) {
        const LayerSpec& spec = b.nodes.at(id);
        LoweredNode n;
        n.id = id;
        n.spec = spec;
        switch (spec.kind) {
            case LayerKind::conv: n.kind = OpKind::conv; break;
            case LayerKind::pool: n.kind = OpKind::pool; break;
            case LayerKind::flatten: n.kind = OpKind::flatten; break;
            case LayerKind::dense: n.kind = OpKind::dense; break;
            case LayerKind::dropout: n.kind = OpKind::dropout; break;
            case LayerKind::batchnorm: n.kind = OpKind::batchnorm; break;
            case LayerKind::add: n.kind = OpKind::add; break;
            case LayerKind::concat: n.kind = OpKind::concat; break;
        }
        if (spec.predecessors.empty()) {
            n.inputs.push_back(0);
        } else {
            for (const std::string& p : spec.predecessors) n.inputs.push_back(index.at(p));
        }
        index[id] = static_cast<int>(g.nodes.size());
        g.nodes.push_back(std::move(n));
    }
    if (!index.count(b.output_id))
        throw config_error("output: unknown node \"" + b.output_id + "\"");
    g.output_index = index.at(b.output_id);
    return g;
}

std::vector<Shape> infer_shapes(const LoweredGraph& g) {
    std::vector<Shape> shapes(g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const LoweredNode& n = g.nodes[i];
        auto in = [&](size_t k) -> const Shape& { return shapes[n.inputs[k]]; };
        switch (n.kind) {
            case OpKind::input:
                shapes[i] = g.input_shapes[n.input_slot];
                break;
            case OpKind::conv: {
                const Shape& s = in(0);
                const auto& k = n.spec.kernel_hw;
                const auto& st = n.spec.stride;
                Shape out;
                if (n.spec.padding == Padding::same) {
                    out.h = (s.h + st[0] - 1) / st[0];
                    out.w = (s.w + st[1] - 1) / st[1];
                } else {
                    out.h = (s.h - k[0]) / st[0] + 1;
                    out.w = (s.w - k[1]) / st[1] + 1;
                    if (s.h < k[0] || s.w < k[1])
                        throw config_error("node \"" + n.id + "\": kernel larger than input (" +
                                           std::to_string(s.h) + "x" + std::to_string(s.w) + ")");
                }
                out.c = n.spec.kernel_count;
                if (out.h < 1 || out.w < 1)
                    throw config_error("node \"" + n.id + "\": non-positive output dimension");
                shapes[i] = out;
                break;
            }
            case OpKind::pool: {
                const Shape& s = in(0);
                const auto& w = n.spec.window;
                const auto& st = n.spec.pool_stride;
                if (s.h < w[0] || s.w < w[1])
                    throw config_error("node \"" + n.id + "\": pool window larger than input");
                shapes[i] = Shape{(s.h - w[0]) / st[0] + 1, (s.w - w[1]) / st[1] + 1, s.c};
                break;
            }
            case OpKind::flatten: {
                const Shape& s = in(0);
                shapes[i] = Shape{1, 1, s.h * s.w * s.c};
                break;
            }
            case OpKind::dense: {
                const Shape& s = in(0);
                if (s.h != 1 || s.w != 1)
                    throw config_error("node \"" + n.id + "\": dense requires flattened input");
                shapes[i] = Shape{1, 1, n.spec.units};
                break;
            }
            case OpKind::dropout:
            case OpKind::batchnorm:
            case OpKind::relu:
                shapes[i] = in(0);
                break;
            case OpKind::add: {
                const Shape& s = in(0);
                for (size_t k = 1; k < n.inputs.size(); ++k)
                    if (!(in(k) == s))
                        throw config_error("node \"" + n.id + "\": add inputs have mismatched shapes");
                shapes[i] = s;
                break;
            }
            case OpKind::concat: {
                Shape s = in(0);
                for (size_t k = 1; k < n.inputs.size(); ++k) {
                    const Shape& o = in(k);
                    if (o.h != s.h || o.w != s.w)
                        throw config_error("node \"" + n.id +
                                           "\": concat inputs have mismatched spatial dims");
                    s.c += o.c;
                }
                shapes[i] = s;
                break;
            }
        }
    }
    return shapes;
}

std::map<std::string, Shape> infer_shapes(const Blueprint& b) {
    LoweredGraph g = lower(b);
    std::vector<Shape> shapes = infer_shapes(g);
    std::map<std::string, Shape> out;
    for (size_t i = 0; i < g.nodes.size(); ++i)
        if (g.nodes[i].kind != OpKind::input) out[g.nodes[i].id] = shapes[i];
    return out;
}

int64_t parameter_count(const LoweredGraph& g) {
    std::vector<Shape> shapes = infer_shapes(g);
    int64_t total = 0;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const LoweredNode& n = g.nodes[i];
        switch (n.kind) {
            case OpKind::conv: {
                const Shape& in = shapes[n.inputs[0]];
                const int64_t cout = n.spec.kernel_count;
                total += static_cast<int64_t>(n.spec.kernel_hw[0]) * n.spec.kernel_hw[1] * in.c *
                             cout + cout;
                break;
            }
            case OpKind::dense: {
                const Shape& in = shapes[n.inputs[0]];
                total += static_cast<int64_t>(in.c) * n.spec.units + n.spec.units;
                break;
            }
            case OpKind::batchnorm:
                total += 2 * static_cast<int64_t>(shapes[i].c);
                break;
            default:
                break;
        }
    }
    return total;
}

int64_t parameter_count(const Blueprint& b) { return parameter_count(lower(b)); }
int64_t parameter_count(const XBlueprint& x) { return parameter_count(lower(x)); }

void validate(const Blueprint& b) {
    if (b.nodes.empty()) throw config_error("blueprint has no nodes");
    if (b.input_shape.h < 1 || b.input_shape.w < 1 || b.input_shape.c < 1)
        throw config_error("input_shape: dimensions must be positive");

    int entries = 0;
    std::set<std::string> referenced;
    for (const auto& [id, spec] : b.nodes) {
        if (spec.id != id) throw config_error("node \"" + id + "\": inconsistent id");
        if (spec.predecessors.empty()) entries++;
        std::set<std::string> seen;
        for (const std::string& p : spec.predecessors) {
            if (!b.nodes.count(p))
                throw config_error("node \"" + id + "\": unknown input \"" + p + "\"");
            if (!seen.insert(p).second)
                throw config_error("node \"" + id + "\": duplicate input \"" + p + "\"");
            referenced.insert(p);
        }
        switch (spec.kind) {
            case LayerKind::conv:
                if (spec.kernel_count < 1)
                    throw config_error("node \"" + id + "\": kernel_count must be >= 1");
                break;
            case LayerKind::dense:
                if (spec.units < 1) throw config_error("node \"" + id + "\": units must be >= 1");
                break;
            case LayerKind::dropout:
                if (spec.rate < 0.0 || spec.rate > 1.0)
                    throw config_error("node \"" + id + "\": dropout rate must be in [0, 1]");
                break;
            case LayerKind::add:
            case LayerKind::concat:
                if (spec.predecessors.size() < 2)
                    throw config_error("node \"" + id + "\": merge node needs >= 2 inputs");
                break;
            default:
                break;
        }
        if (spec.kind != LayerKind::add && spec.kind != LayerKind::concat &&
            spec.predecessors.size() > 1)
            throw config_error("node \"" + id + "\": multiple inputs only allowed on add/concat");
    }
    if (entries != 1)
        throw config_error("blueprint must have exactly one entry node, found " +
                           std::to_string(entries));

    if (!b.nodes.count(b.output_id))
        throw config_error("output: unknown node \"" + b.output_id + "\"");
    for (const auto& [id, spec] : b.nodes)
        if (!referenced.count(id) && id != b.output_id)
            throw config_error("node \"" + id + "\": dangling output (only \"" + b.output_id +
                               "\" may be a sink)");
    if (referenced.count(b.output_id))
        throw config_error("output node \"" + b.output_id + "\" must not feed another node");

    topo_order(b);              // cycle check
    infer_shapes(b);            // shape check

    if (!b.classifier_boundary.empty()) {
        if (!b.nodes.count(b.classifier_boundary))
            throw config_error("classifier_boundary: unknown node \"" + b.classifier_boundary +
                               "\"");
        // Dominance: with the boundary removed the output must be unreachable.
        Blueprint stripped = b;
        stripped.nodes.erase(b.classifier_boundary);
        for (auto& [id, spec] : stripped.nodes)
            std::erase(spec.predecessors, b.classifier_boundary);
        std::map<std::string, std::vector<std::string>> succ;
        for (const auto& [id, spec] : stripped.nodes)
            for (const std::string& p : spec.predecessors) succ[p].push_back(id);
        std::string entry;
        for (const auto& [id, spec] : b.nodes)
            if (spec.predecessors.empty()) entry = id;
        if (entry != b.classifier_boundary) {
            std::set<std::string> seen{entry};
            std::vector<std::string> stack{entry};
            while (!stack.empty()) {
                std::string cur = stack.back();
                stack.pop_back();
                for (const std::string& nxt : succ[cur])
                    if (seen.insert(nxt).second) stack.push_back(nxt);
            }
            if (seen.count(b.output_id))
                throw config_error("classifier_boundary \"" + b.classifier_boundary +
                                   "\" is not on every input-to-output path");
        }
    }
}

Blueprint parse_blueprint(const std::string& document) {
    json doc = parse_document(document);
    check_version(doc);
    Blueprint b = parse_fragment(doc, "document");
    validate(b);
    return b;
}

std::string serialize_blueprint(const Blueprint& b) {
    json doc = fragment_to_json(b);
    doc["format_version"] = 1;
    if (!b.classifier_boundary.empty()) doc["classifier_boundary"] = b.classifier_boundary;
    return doc.dump(2) + "\n";
}

bool document_is_xblueprint(const std::string& document) {
    json doc = parse_document(document);
    return doc.contains("superlayers");
}

std::string serialize_blueprint(const XBlueprint& x) {
    json doc;
    doc["format_version"] = 1;
    doc["modality_order"] = x.modality_order;
    json supers = json::object();
    for (const auto& [name, frag] : x.superlayers) supers[name] = fragment_to_json(frag);
    doc["superlayers"] = std::move(supers);
    doc["insertion_points"] = x.insertion_points;
    json conns = json::array();
    for (const CrossConnection& c : x.connections) {
        json j;
        j["src_modality"] = c.src_modality;
        j["dst_modality"] = c.dst_modality;
        j["depth_index"] = c.depth_index;
        j["weight"] = c.weight;
        j["projection_channels"] = c.projection_channels;
        conns.push_back(std::move(j));
    }
    doc["connections"] = std::move(conns);
    doc["classifier"] = fragment_to_json(x.classifier);
    return doc.dump(2) + "\n";
}

XBlueprint parse_xblueprint(const std::string& document) {
    json doc = parse_document(document);
    check_version(doc);
    XBlueprint x;
    const json& order = require_field(doc, "modality_order", "document");
    if (!order.is_array() || order.empty())
        throw config_error("modality_order: expected non-empty array");
    for (const auto& m : order) {
        if (!m.is_string()) throw config_error("modality_order: expected strings");
        x.modality_order.push_back(m.get<std::string>());
    }
    const json& supers = require_field(doc, "superlayers", "document");
    if (!supers.is_object()) throw config_error("superlayers: expected object");
    for (auto it = supers.begin(); it != supers.end(); ++it)
        x.superlayers[it.key()] =
            parse_fragment(it.value(), "superlayers." + it.key(), /*allow_namespace=*/true);
    const json& ips = require_field(doc, "insertion_points", "document");
    if (!ips.is_array()) throw config_error("insertion_points: expected array");
    for (const auto& p : ips) {
        if (!p.is_string()) throw config_error("insertion_points: expected strings");
        x.insertion_points.push_back(p.get<std::string>());
    }
    const json& conns = require_field(doc, "connections", "document");
    if (!conns.is_array()) throw config_error("connections: expected array");
    for (size_t i = 0; i < conns.size(); ++i) {
        const std::string path = "connections[" + std::to_string(i) + "]";
        const json& j = conns[i];
        if (!j.is_object()) throw config_error(path + ": expected object");
        CrossConnection c;
        c.src_modality = require_string(j, "src_modality", path);
        c.dst_modality = require_string(j, "dst_modality", path);
        c.depth_index = require_int(j, "depth_index", path, 0);
        c.weight = require_number(j, "weight", path);
        c.projection_channels = require_int(j, "projection_channels", path, 0);
        x.connections.push_back(std::move(c));
    }
    x.classifier = parse_fragment(require_field(doc, "classifier", "document"), "classifier");
    validate(x);
    return x;
}

namespace {

// Structural comparison of two super-layer fragments after stripping the
// "<modality>/" namespace: same kinds, same edges; hyperparameters may differ.
std::string strip_namespace(const std::string& id, const std::string& modality) {
    const std::string prefix = modality + "/";
    if (id.rfind(prefix, 0) == 0) return id.substr(prefix.size());
    return id;
}

void check_isomorphic(const XBlueprint& x) {
    const std::string& ref_name = x.modality_order.front();
    const Blueprint& ref = x.superlayers.at(ref_name);
    std::map<std::string, std::pair<LayerKind, std::vector<std::string>>> ref_struct;
    for (const auto& [id, spec] : ref.nodes) {
        std::vector<std::string> preds;
        for (const auto& p : spec.predecessors) preds.push_back(strip_namespace(p, ref_name));
        ref_struct[strip_namespace(id, ref_name)] = {spec.kind, preds};
    }
    for (const std::string& name : x.modality_order) {
        const Blueprint& frag = x.superlayers.at(name);
        if (frag.nodes.size() != ref.nodes.size())
            throw config_error("superlayer \"" + name + "\": not isomorphic to \"" + ref_name +
                               "\" (node count differs)");
        for (const auto& [id, spec] : frag.nodes) {
            const std::string base = strip_namespace(id, name);
            auto it = ref_struct.find(base);
            if (it == ref_struct.end() || it->second.first != spec.kind)
                throw config_error("superlayer \"" + name + "\": node \"" + base +
                                   "\" does not match superlayer \"" + ref_name + "\"");
            std::vector<std::string> preds;
            for (const auto& p : spec.predecessors) preds.push_back(strip_namespace(p, name));
            if (preds != it->second.second)
                throw config_error("superlayer \"" + name + "\": edges of \"" + base +
                                   "\" do not match superlayer \"" + ref_name + "\"");
        }
    }
}

}  // namespace

void validate(const XBlueprint& x) {
    if (x.modality_order.empty()) throw config_error("xblueprint: empty modality_order");
    if (x.modality_order.size() != x.superlayers.size())
        throw config_error("xblueprint: modality_order and superlayers disagree");
    for (const std::string& m : x.modality_order) {
        if (!x.superlayers.count(m))
            throw config_error("xblueprint: modality \"" + m + "\" has no superlayer");
        validate(x.superlayers.at(m));
    }
    check_isomorphic(x);
    for (const std::string& ip : x.insertion_points) {
        for (const std::string& m : x.modality_order) {
            if (!x.superlayers.at(m).nodes.count(m + "/" + ip))
                throw config_error("insertion point \"" + ip + "\" missing from superlayer \"" +
                                   m + "\"");
        }
    }
    std::set<std::pair<std::string, std::string>> mods;
    for (const CrossConnection& c : x.connections) {
        if (c.src_modality == c.dst_modality)
            throw config_error("connection " + c.src_modality + "->" + c.dst_modality +
                               ": source equals destination");
        for (const std::string* m : {&c.src_modality, &c.dst_modality})
            if (!x.superlayers.count(*m))
                throw config_error("connection references unknown modality \"" + *m + "\"");
        if (c.depth_index < 0 || c.depth_index >= static_cast<int>(x.insertion_points.size()))
            throw config_error("connection " + c.src_modality + "->" + c.dst_modality +
                               ": depth_index out of range");
        if (c.weight < 0.0 || c.weight > 1.0)
            throw config_error("connection " + c.src_modality + "->" + c.dst_modality +
                               ": weight must be in [0, 1]");
    }
    validate(x.classifier);
    infer_shapes(lower(x));  // concat consistency across superlayers
}

LoweredGraph lower(const XBlueprint& x) {
    struct Proto {
        OpKind kind;
        LayerSpec spec;
        std::vector<std::string> preds;
        int input_slot = -1;
    };
    std::map<std::string, Proto> proto;
    LoweredGraph g;

    auto op_kind = [](LayerKind k) {
        switch (k) {
            case LayerKind::conv: return OpKind::conv;
            case LayerKind::pool: return OpKind::pool;
            case LayerKind::flatten: return OpKind::flatten;
            case LayerKind::dense: return OpKind::dense;
            case LayerKind::dropout: return OpKind::dropout;
            case LayerKind::batchnorm: return OpKind::batchnorm;
            case LayerKind::add: return OpKind::add;
            case LayerKind::concat: return OpKind::concat;
        }
        return OpKind::conv;
    };

    for (size_t slot = 0; slot < x.modality_order.size(); ++slot) {
        const std::string& m = x.modality_order[slot];
        const Blueprint& frag = x.superlayers.at(m);
        g.input_names.push_back(m);
        g.input_shapes.push_back(frag.input_shape);
        Proto in;
        in.kind = OpKind::input;
        in.input_slot = static_cast<int>(slot);
        proto["input/" + m] = in;
        for (const auto& [id, spec] : frag.nodes) {
            Proto p;
            p.kind = op_kind(spec.kind);
            p.spec = spec;
            p.preds = spec.predecessors;
            if (p.preds.empty()) p.preds.push_back("input/" + m);
            proto[id] = std::move(p);
        }
    }

    // Connection sub-graphs: 1x1 conv -> batchnorm -> relu off the source
    // insertion node; destinations gather them in a concat that replaces the
    // insertion node for downstream consumers.
    std::map<std::string, std::vector<std::string>> incoming;  // concat id -> relu ids
    for (const CrossConnection& c : x.connections) {
        if (c.dropped()) continue;
        const std::string& ip = x.insertion_points.at(c.depth_index);
        const std::string tag =
            c.src_modality + "->" + c.dst_modality + "@" + std::to_string(c.depth_index);
        LayerSpec conv;
        conv.id = tag + "/proj";
        conv.kind = LayerKind::conv;
        conv.kernel_count = c.projection_channels;
        conv.kernel_hw = {1, 1};
        conv.stride = {1, 1};
        conv.padding = Padding::same;
        conv.activation = Activation::none;
        Proto pconv{OpKind::conv, conv, {c.src_modality + "/" + ip}, -1};
        proto[conv.id] = pconv;
        LayerSpec bn;
        bn.id = tag + "/bn";
        bn.kind = LayerKind::batchnorm;
        Proto pbn{OpKind::batchnorm, bn, {conv.id}, -1};
        proto[bn.id] = pbn;
        LayerSpec relu;
        relu.id = tag + "/relu";
        Proto prelu{OpKind::relu, relu, {bn.id}, -1};
        proto[relu.id] = prelu;
        incoming[c.dst_modality + "@" + std::to_string(c.depth_index) + "/concat"]
            .push_back(relu.id);
    }
    for (auto& [concat_id, relus] : incoming) {
        const size_t at = concat_id.find('@');
        const std::string dst = concat_id.substr(0, at);
        const int depth = std::stoi(concat_id.substr(at + 1));
        const std::string ip_node = dst + "/" + x.insertion_points.at(depth);
        // Deterministic gather order: source modality order.
        std::vector<std::string> ordered;
        for (const std::string& m : x.modality_order)
            for (const std::string& r : relus)
                if (r.rfind(m + "->", 0) == 0) ordered.push_back(r);
        LayerSpec cc;
        cc.id = concat_id;
        cc.kind = LayerKind::concat;
        Proto pc{OpKind::concat, cc, {}, -1};
        pc.preds.push_back(ip_node);
        for (const std::string& r : ordered) pc.preds.push_back(r);
        // Re-route superlayer-internal consumers of the insertion node.
        for (const auto& [m_dst, frag] : x.superlayers) {
            if (m_dst != dst) continue;
            for (const auto& [id, spec] : frag.nodes) {
                for (std::string& p : proto.at(id).preds)
                    if (p == ip_node) p = concat_id;
            }
        }
        proto[concat_id] = std::move(pc);
    }

    // Shared classifier reads the concat of all superlayer outputs.
    LayerSpec shared;
    shared.id = "shared/concat";
    shared.kind = LayerKind::concat;
    Proto pshared{OpKind::concat, shared, {}, -1};
    for (const std::string& m : x.modality_order)
        pshared.preds.push_back(x.superlayers.at(m).output_id);
    proto["shared/concat"] = std::move(pshared);
    for (const auto& [id, spec] : x.classifier.nodes) {
        Proto p;
        p.kind = op_kind(spec.kind);
        p.spec = spec;
        p.preds = spec.predecessors;
        if (p.preds.empty()) p.preds.push_back("shared/concat");
        proto[id] = std::move(p);
    }

    // Canonical topological order over the merged proto graph.
    std::map<std::string, int> pending;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, p] : proto) {
        pending[id] = static_cast<int>(p.preds.size());
        for (const std::string& pr : p.preds) {
            if (!proto.count(pr))
                throw config_error("xblueprint: node \"" + id + "\" references unknown \"" + pr +
                                   "\"");
            succ[pr].push_back(id);
        }
    }
    std::set<std::string> ready;
    for (const auto& [id, n] : pending)
        if (n == 0) ready.insert(id);
    std::map<std::string, int> index;
    while (!ready.empty()) {
        std::string id = *ready.begin();
        ready.erase(ready.begin());
        const Proto& p = proto.at(id);
        LoweredNode n;
        n.id = id;
        n.kind = p.kind;
        n.spec = p.spec;
        n.spec.id = id;
        n.input_slot = p.input_slot;
        for (const std::string& pr : p.preds) n.inputs.push_back(index.at(pr));
        index[id] = static_cast<int>(g.nodes.size());
        g.nodes.push_back(std::move(n));
        for (const std::string& s : succ[id])
            if (--pending[s] == 0) ready.insert(s);
    }
    if (g.nodes.size() != proto.size()) throw config_error("xblueprint graph contains a cycle");
    g.output_index = index.at(x.classifier.output_id);
    return g;
}

std::string resolve_classifier_boundary(const Blueprint& b) {
    if (!b.classifier_boundary.empty()) return b.classifier_boundary;
    std::map<std::string, Shape> shapes = infer_shapes(b);
    for (const std::string& id : topo_order(b)) {
        const LayerSpec& spec = b.nodes.at(id);
        if (spec.kind == LayerKind::flatten) return id;
        if (spec.kind == LayerKind::pool && !spec.predecessors.empty()) {
            const Shape& in = shapes.count(spec.predecessors[0])
                                  ? shapes.at(spec.predecessors[0])
                                  : b.input_shape;
            if (spec.window[0] == in.h && spec.window[1] == in.w) return id;  // global pool
        }
    }
    throw config_error("classifier boundary is unset and no flatten/global-pool node exists");
}

SplitBlueprint split_at_classifier(const Blueprint& b) {
    const std::string boundary = resolve_classifier_boundary(b);
    Blueprint checked = b;
    checked.classifier_boundary = boundary;
    validate(checked);  // includes dominance check

    const LayerSpec& bspec = b.nodes.at(boundary);
    if (bspec.predecessors.size() != 1)
        throw config_error("classifier boundary \"" + boundary +
                           "\" must have exactly one predecessor");
    const std::string exit_id = bspec.predecessors[0];

    std::set<std::string> classifier_set = descendants(b, boundary);
    std::map<std::string, Shape> shapes = infer_shapes(b);

    SplitBlueprint out;
    out.extractor.input_shape = b.input_shape;
    out.extractor.output_id = exit_id;
    out.classifier.input_shape = shapes.at(exit_id);
    out.classifier.output_id = b.output_id;
    for (const auto& [id, spec] : b.nodes) {
        if (classifier_set.count(id)) {
            LayerSpec s = spec;
            if (id == boundary) s.predecessors.clear();
            out.classifier.nodes.emplace(id, std::move(s));
        } else {
            out.extractor.nodes.emplace(id, spec);
        }
    }
    validate(out.extractor);
    validate(out.classifier);
    return out;
}

std::vector<std::string> find_insertion_points(const Blueprint& b) {
    const std::string boundary = resolve_classifier_boundary(b);
    std::set<std::string> classifier_set = descendants(b, boundary);

    std::map<std::string, bool> conv_upstream;
    std::vector<std::string> candidates;
    for (const std::string& id : topo_order(b)) {
        const LayerSpec& spec = b.nodes.at(id);
        bool upstream = false;
        for (const std::string& p : spec.predecessors)
            upstream = upstream || conv_upstream[p] || b.nodes.at(p).kind == LayerKind::conv;
        conv_upstream[id] = upstream;
        if (classifier_set.count(id)) continue;
        if (spec.kind == LayerKind::pool && upstream) candidates.push_back(id);
        if (spec.kind == LayerKind::add || spec.kind == LayerKind::concat)
            candidates.push_back(id);
    }
    if (!candidates.empty()) candidates.pop_back();  // last one feeds the shared merge
    if (candidates.empty())
        throw config_error(
            "blueprint has no usable insertion points (no block structure before the classifier)");
    return candidates;
}

}  // namespace xcnn
