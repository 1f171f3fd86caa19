// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale tensor engine: compiles lowered blueprint graphs into executable
// models with deterministic init, reverse-mode gradients and Adam training.
// Single precision is the training default; instantiate with double for
// finite-difference gradient checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xcnn/blueprint.hpp"
#include "xcnn/common.hpp"
#include "xcnn/tensor.hpp"

namespace xcnn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int epochs = 10;
    uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw config_error("train: learning_rate must be > 0");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
        throw config_error("train: adam betas must be in [0, 1)");
    if (cfg.epochs < 1) throw config_error("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw config_error("train: batch_size must be >= 1");
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = -1.0;  // -1 when no validation set was supplied
};
using History = std::vector<EpochStats>;

template <typename T>
using ParamMap = std::map<std::string, std::vector<Tensor<T>>>;

// Multi-input dataset aligned with a lowered graph's input slots.
template <typename T>
struct Batchset {
    std::vector<Tensor<T>> inputs;  // one (n, h, w, c) tensor per slot
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& t, const std::vector<int>& idx) {
    Tensor<T> out;
    out.shape = t.shape;
    out.shape[0] = static_cast<int>(idx.size());
    const int64_t row = t.numel() / t.shape[0];
    out.data.resize(row * idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(t.data.begin() + idx[i] * row, row, out.data.begin() + i * row);
    return out;
}

template <typename T>
Batchset<T> gather(const Batchset<T>& b, const std::vector<int>& idx) {
    Batchset<T> out;
    for (const Tensor<T>& t : b.inputs) out.inputs.push_back(gather_rows(t, idx));
    out.labels.reserve(idx.size());
    for (int i : idx) out.labels.push_back(b.labels[i]);
    return out;
}

template <typename T>
class ExecutableModel {
public:
    ExecutableModel() = default;
    ExecutableModel(LoweredGraph graph, uint64_t seed)
        : graph_(std::move(graph)), shapes_(infer_shapes(graph_)), seed_(seed) {
        init_params();
    }

    const LoweredGraph& graph() const { return graph_; }
    const std::vector<Shape>& node_shapes() const { return shapes_; }
    uint64_t seed() const { return seed_; }
    int num_classes() const { return shapes_[graph_.output_index].c; }

    ParamMap<T>& params() { return params_; }
    const ParamMap<T>& params() const { return params_; }
    ParamMap<T>& state() { return state_; }
    const ParamMap<T>& state() const { return state_; }

private:
    void init_params() {
        for (size_t i = 0; i < graph_.nodes.size(); ++i) {
            const LoweredNode& n = graph_.nodes[i];
            Rng rng(mix_seed(seed_, "init/" + n.id));
            auto he_uniform = [&](Tensor<T>& t, int fan_in) {
                const double limit = std::sqrt(6.0 / fan_in);
                for (T& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
            };
            switch (n.kind) {
                case OpKind::conv: {
                    const Shape& in = shapes_[n.inputs[0]];
                    Tensor<T> w({n.spec.kernel_hw[0], n.spec.kernel_hw[1], in.c,
                                 n.spec.kernel_count});
                    he_uniform(w, n.spec.kernel_hw[0] * n.spec.kernel_hw[1] * in.c);
                    Tensor<T> b({n.spec.kernel_count});
                    params_[n.id] = {std::move(w), std::move(b)};
                    break;
                }
                case OpKind::dense: {
                    const Shape& in = shapes_[n.inputs[0]];
                    Tensor<T> w({in.c, n.spec.units});
                    he_uniform(w, in.c);
                    Tensor<T> b({n.spec.units});
                    params_[n.id] = {std::move(w), std::move(b)};
                    break;
                }
                case OpKind::batchnorm: {
                    const int c = shapes_[i].c;
                    Tensor<T> gamma({c}), beta({c}), rm({c}), rv({c});
                    std::fill(gamma.data.begin(), gamma.data.end(), T(1));
                    std::fill(rv.data.begin(), rv.data.end(), T(1));
                    params_[n.id] = {std::move(gamma), std::move(beta)};
                    state_[n.id] = {std::move(rm), std::move(rv)};
                    break;
                }
                default:
                    break;
            }
        }
    }

    LoweredGraph graph_;
    std::vector<Shape> shapes_;
    ParamMap<T> params_;
    ParamMap<T> state_;
    uint64_t seed_ = 0;
};

template <typename T>
ExecutableModel<T> compile(const LoweredGraph& g, uint64_t seed) {
    return ExecutableModel<T>(g, seed);
}
template <typename T>
ExecutableModel<T> compile(const Blueprint& b, uint64_t seed) {
    return ExecutableModel<T>(lower(b), seed);
}
template <typename T>
ExecutableModel<T> compile(const XBlueprint& x, uint64_t seed) {
    return ExecutableModel<T>(lower(x), seed);
}

// --- forward/backward -------------------------------------------------------

template <typename T>
struct Workspace {
    std::vector<Tensor<T>> act;
    std::vector<Tensor<T>> cache;          // dropout mask scale / batchnorm xhat
    std::vector<std::vector<T>> invstd;    // batchnorm, per channel
    std::vector<std::vector<int64_t>> argmax;  // max pool
    bool training = false;
};

namespace detail {

inline void same_padding(int in, int k, int stride, int out, int& pad_lo) {
    const int total = std::max(0, (out - 1) * stride + k - in);
    pad_lo = total / 2;
}

template <typename T>
void conv_forward(const LoweredNode& n, const Tensor<T>& x, const Tensor<T>& w,
                  const Tensor<T>& b, Tensor<T>& y) {
    const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int KH = w.shape[0], KW = w.shape[1], OC = w.shape[3];
    const int SH = n.spec.stride[0], SW = n.spec.stride[1];
    const int OH = y.shape[1], OW = y.shape[2];
    int ph = 0, pw = 0;
    if (n.spec.padding == Padding::same) {
        same_padding(H, KH, SH, OH, ph);
        same_padding(W, KW, SW, OW, pw);
    }
    for (int ni = 0; ni < N; ++ni)
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
                T* out = &y.at4(ni, oh, ow, 0);
                for (int oc = 0; oc < OC; ++oc) out[oc] = b.data[oc];
                for (int kh = 0; kh < KH; ++kh) {
                    const int ih = oh * SH - ph + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (int kw = 0; kw < KW; ++kw) {
                        const int iw = ow * SW - pw + kw;
                        if (iw < 0 || iw >= W) continue;
                        const T* in = &x.at4(ni, ih, iw, 0);
                        const T* wk = &w.data[((static_cast<int64_t>(kh) * KW + kw) * C) * OC];
                        for (int ic = 0; ic < C; ++ic) {
                            const T v = in[ic];
                            const T* wrow = wk + static_cast<int64_t>(ic) * OC;
                            for (int oc = 0; oc < OC; ++oc) out[oc] += v * wrow[oc];
                        }
                    }
                }
            }
}

template <typename T>
void conv_backward(const LoweredNode& n, const Tensor<T>& x, const Tensor<T>& w,
                   const Tensor<T>& dy, Tensor<T>& dx, Tensor<T>& dw, Tensor<T>& db) {
    const int N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int KH = w.shape[0], KW = w.shape[1], OC = w.shape[3];
    const int SH = n.spec.stride[0], SW = n.spec.stride[1];
    const int OH = dy.shape[1], OW = dy.shape[2];
    int ph = 0, pw = 0;
    if (n.spec.padding == Padding::same) {
        same_padding(H, KH, SH, OH, ph);
        same_padding(W, KW, SW, OW, pw);
    }
    for (int ni = 0; ni < N; ++ni)
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
                const T* g = &dy.at4(ni, oh, ow, 0);
                for (int oc = 0; oc < OC; ++oc) db.data[oc] += g[oc];
                for (int kh = 0; kh < KH; ++kh) {
                    const int ih = oh * SH - ph + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (int kw = 0; kw < KW; ++kw) {
                        const int iw = ow * SW - pw + kw;
                        if (iw < 0 || iw >= W) continue;
                        const T* in = &x.at4(ni, ih, iw, 0);
                        T* din = &dx.at4(ni, ih, iw, 0);
                        const int64_t base = (static_cast<int64_t>(kh) * KW + kw) * C;
                        for (int ic = 0; ic < C; ++ic) {
                            const T* wrow = &w.data[(base + ic) * OC];
                            T* dwrow = &dw.data[(base + ic) * OC];
                            T acc = 0;
                            const T v = in[ic];
                            for (int oc = 0; oc < OC; ++oc) {
                                acc += wrow[oc] * g[oc];
                                dwrow[oc] += v * g[oc];
                            }
                            din[ic] += acc;
                        }
                    }
                }
            }
}

}  // namespace detail

// Evaluates the graph into ws.act. Dropout draws from `dropout_rng` only in
// training mode; evaluation-mode passes are pure.
template <typename T>
void run_forward(const ExecutableModel<T>& m, const std::vector<Tensor<T>>& inputs,
                 Workspace<T>& ws, Rng* dropout_rng = nullptr) {
    const LoweredGraph& g = m.graph();
    if (inputs.size() != g.input_shapes.size())
        throw config_error("forward: expected " + std::to_string(g.input_shapes.size()) +
                           " input tensor(s), got " + std::to_string(inputs.size()));
    const int N = inputs.empty() ? 0 : inputs[0].shape[0];
    for (size_t s = 0; s < inputs.size(); ++s) {
        const Shape& want = g.input_shapes[s];
        const auto& got = inputs[s].shape;
        if (got.size() != 4 || got[0] != N || got[1] != want.h || got[2] != want.w ||
            got[3] != want.c)
            throw config_error("forward: input \"" + g.input_names[s] + "\" has wrong shape");
    }

    const size_t count = g.nodes.size();
    ws.act.assign(count, {});
    ws.cache.assign(count, {});
    ws.invstd.assign(count, {});
    ws.argmax.assign(count, {});

    for (size_t i = 0; i < count; ++i) {
        const LoweredNode& n = g.nodes[i];
        const Shape& os = m.node_shapes()[i];
        auto in = [&](size_t k) -> const Tensor<T>& { return ws.act[n.inputs[k]]; };
        switch (n.kind) {
            case OpKind::input:
                ws.act[i] = inputs[n.input_slot];
                break;
            case OpKind::conv: {
                Tensor<T> y({N, os.h, os.w, os.c});
                const auto& p = m.params().at(n.id);
                detail::conv_forward(n, in(0), p[0], p[1], y);
                if (n.spec.activation == Activation::relu)
                    for (T& v : y.data) v = v > T(0) ? v : T(0);
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::dense: {
                const Tensor<T>& x = in(0);
                const auto& p = m.params().at(n.id);
                const int IN = p[0].shape[0], OUT = p[0].shape[1];
                Tensor<T> y({N, 1, 1, OUT});
                for (int ni = 0; ni < N; ++ni) {
                    T* out = &y.data[static_cast<int64_t>(ni) * OUT];
                    for (int j = 0; j < OUT; ++j) out[j] = p[1].data[j];
                    const T* row = &x.data[static_cast<int64_t>(ni) * IN];
                    for (int k = 0; k < IN; ++k) {
                        const T v = row[k];
                        const T* wrow = &p[0].data[static_cast<int64_t>(k) * OUT];
                        for (int j = 0; j < OUT; ++j) out[j] += v * wrow[j];
                    }
                }
                if (n.spec.activation == Activation::relu)
                    for (T& v : y.data) v = v > T(0) ? v : T(0);
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::pool: {
                const Tensor<T>& x = in(0);
                Tensor<T> y({N, os.h, os.w, os.c});
                const int WH = n.spec.window[0], WW = n.spec.window[1];
                const int SH = n.spec.pool_stride[0], SW = n.spec.pool_stride[1];
                if (n.spec.pool_mode == PoolMode::max)
                    ws.argmax[i].assign(y.numel(), 0);
                int64_t oidx = 0;
                for (int ni = 0; ni < N; ++ni)
                    for (int oh = 0; oh < os.h; ++oh)
                        for (int ow = 0; ow < os.w; ++ow)
                            for (int c = 0; c < os.c; ++c, ++oidx) {
                                if (n.spec.pool_mode == PoolMode::max) {
                                    T best = x.at4(ni, oh * SH, ow * SW, c);
                                    int64_t bidx =
                                        &x.at4(ni, oh * SH, ow * SW, c) - x.data.data();
                                    for (int a = 0; a < WH; ++a)
                                        for (int bcol = 0; bcol < WW; ++bcol) {
                                            const T v = x.at4(ni, oh * SH + a, ow * SW + bcol, c);
                                            if (v > best) {
                                                best = v;
                                                bidx = &x.at4(ni, oh * SH + a, ow * SW + bcol, c) -
                                                       x.data.data();
                                            }
                                        }
                                    y.data[oidx] = best;
                                    ws.argmax[i][oidx] = bidx;
                                } else {
                                    T acc = 0;
                                    for (int a = 0; a < WH; ++a)
                                        for (int bcol = 0; bcol < WW; ++bcol)
                                            acc += x.at4(ni, oh * SH + a, ow * SW + bcol, c);
                                    y.data[oidx] = acc / static_cast<T>(WH * WW);
                                }
                            }
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::flatten: {
                Tensor<T> y = in(0);
                y.shape = {N, 1, 1, os.c};
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::dropout: {
                const Tensor<T>& x = in(0);
                if (!ws.training || n.spec.rate == 0.0) {
                    ws.act[i] = x;
                    break;
                }
                const double rate = n.spec.rate;
                const T scale = rate < 1.0 ? static_cast<T>(1.0 / (1.0 - rate)) : T(0);
                Tensor<T> mask;
                mask.shape = x.shape;
                mask.data.resize(x.data.size());
                Tensor<T> y;
                y.shape = x.shape;
                y.data.resize(x.data.size());
                for (size_t k = 0; k < x.data.size(); ++k) {
                    const T s = (dropout_rng && dropout_rng->uniform() < rate) ? T(0) : scale;
                    mask.data[k] = s;
                    y.data[k] = x.data[k] * s;
                }
                ws.cache[i] = std::move(mask);
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::batchnorm: {
                const Tensor<T>& x = in(0);
                const int C = os.c;
                const int64_t M = x.numel() / C;
                auto& p = m.params().at(n.id);
                Tensor<T> xhat;
                xhat.shape = x.shape;
                xhat.data.resize(x.data.size());
                Tensor<T> y;
                y.shape = x.shape;
                y.data.resize(x.data.size());
                std::vector<T> invstd(C);
                if (ws.training) {
                    std::vector<T> mean(C, T(0)), var(C, T(0));
                    for (int64_t k = 0; k < x.numel(); ++k) mean[k % C] += x.data[k];
                    for (int c = 0; c < C; ++c) mean[c] /= static_cast<T>(M);
                    for (int64_t k = 0; k < x.numel(); ++k) {
                        const T d = x.data[k] - mean[k % C];
                        var[k % C] += d * d;
                    }
                    for (int c = 0; c < C; ++c) var[c] /= static_cast<T>(M);
                    for (int c = 0; c < C; ++c)
                        invstd[c] = T(1) / std::sqrt(var[c] + static_cast<T>(n.spec.epsilon));
                    // momentum 0.9 running stats, updated on every training pass
                    auto& st = const_cast<ParamMap<T>&>(m.state()).at(n.id);
                    for (int c = 0; c < C; ++c) {
                        st[0].data[c] = T(0.9) * st[0].data[c] + T(0.1) * mean[c];
                        st[1].data[c] = T(0.9) * st[1].data[c] + T(0.1) * var[c];
                    }
                    for (int64_t k = 0; k < x.numel(); ++k)
                        xhat.data[k] = (x.data[k] - mean[k % C]) * invstd[k % C];
                } else {
                    const auto& st = m.state().at(n.id);
                    for (int c = 0; c < C; ++c)
                        invstd[c] =
                            T(1) / std::sqrt(st[1].data[c] + static_cast<T>(n.spec.epsilon));
                    for (int64_t k = 0; k < x.numel(); ++k)
                        xhat.data[k] = (x.data[k] - st[0].data[k % C]) * invstd[k % C];
                }
                for (int64_t k = 0; k < x.numel(); ++k)
                    y.data[k] = p[0].data[k % C] * xhat.data[k] + p[1].data[k % C];
                ws.invstd[i] = std::move(invstd);
                ws.cache[i] = std::move(xhat);
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::add: {
                Tensor<T> y = in(0);
                for (size_t k = 1; k < n.inputs.size(); ++k) {
                    const Tensor<T>& o = in(k);
                    for (size_t j = 0; j < y.data.size(); ++j) y.data[j] += o.data[j];
                }
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::concat: {
                Tensor<T> y({N, os.h, os.w, os.c});
                int offset = 0;
                for (size_t k = 0; k < n.inputs.size(); ++k) {
                    const Tensor<T>& x = in(k);
                    const int xc = x.shape[3];
                    for (int ni = 0; ni < N; ++ni)
                        for (int h = 0; h < os.h; ++h)
                            for (int w = 0; w < os.w; ++w)
                                std::copy_n(&x.at4(ni, h, w, 0), xc,
                                            &y.at4(ni, h, w, offset));
                    offset += xc;
                }
                ws.act[i] = std::move(y);
                break;
            }
            case OpKind::relu: {
                Tensor<T> y = in(0);
                for (T& v : y.data) v = v > T(0) ? v : T(0);
                ws.act[i] = std::move(y);
                break;
            }
        }
    }
#ifndef NDEBUG
    for (const Tensor<T>& a : ws.act)
        for (const T& v : a.data)
            if (!std::isfinite(static_cast<double>(v)))
                throw train_error("forward produced a non-finite activation");
#endif
}

// Eval-mode logits, shape (batch, classes).
template <typename T>
Tensor<T> forward(const ExecutableModel<T>& m, const std::vector<Tensor<T>>& inputs) {
    Workspace<T> ws;
    ws.training = false;
    run_forward(m, inputs, ws);
    const Tensor<T>& out = ws.act[m.graph().output_index];
    Tensor<T> logits;
    logits.shape = {out.shape[0], m.num_classes()};
    logits.data = out.data;
    return logits;
}

// Mean softmax cross-entropy; fills dlogits with dLoss/dlogits.
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                             int classes, Tensor<T>* dlogits) {
    const int N = logits.shape[0];
    if (static_cast<int>(labels.size()) != N)
        throw data_error("loss: labels do not match batch size");
    if (dlogits) {
        dlogits->shape = logits.shape;
        dlogits->data.assign(logits.data.size(), T(0));
    }
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        if (labels[n] < 0 || labels[n] >= classes)
            throw data_error("loss: label " + std::to_string(labels[n]) + " out of range [0, " +
                             std::to_string(classes) + ")");
        const T* row = &logits.data[static_cast<int64_t>(n) * classes];
        T mx = row[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        const double log_denom = std::log(denom);
        loss += -(static_cast<double>(row[labels[n]] - mx) - log_denom);
        if (dlogits) {
            T* drow = &dlogits->data[static_cast<int64_t>(n) * classes];
            for (int c = 0; c < classes; ++c) {
                const double p = std::exp(static_cast<double>(row[c] - mx)) / denom;
                drow[c] = static_cast<T>((p - (c == labels[n] ? 1.0 : 0.0)) / N);
            }
        }
    }
    return loss / N;
}

// Backpropagates dlogits through the workspace; returns per-node param grads.
template <typename T>
ParamMap<T> run_backward(const ExecutableModel<T>& m, Workspace<T>& ws,
                         const Tensor<T>& dlogits) {
    const LoweredGraph& g = m.graph();
    std::vector<Tensor<T>> grad(g.nodes.size());
    auto ensure = [&](size_t idx) -> Tensor<T>& {
        if (grad[idx].data.empty()) {
            grad[idx].shape = ws.act[idx].shape;
            grad[idx].data.assign(ws.act[idx].data.size(), T(0));
        }
        return grad[idx];
    };
    {
        Tensor<T>& out = ensure(g.output_index);
        std::copy(dlogits.data.begin(), dlogits.data.end(), out.data.begin());
    }

    ParamMap<T> grads;
    for (size_t ri = g.nodes.size(); ri-- > 0;) {
        const LoweredNode& n = g.nodes[ri];
        if (grad[ri].data.empty()) continue;  // no gradient flows here
        Tensor<T>& dy = grad[ri];
        switch (n.kind) {
            case OpKind::input:
                break;
            case OpKind::conv: {
                if (n.spec.activation == Activation::relu) {
                    const Tensor<T>& y = ws.act[ri];
                    for (size_t k = 0; k < dy.data.size(); ++k)
                        if (y.data[k] <= T(0)) dy.data[k] = T(0);
                }
                const auto& p = m.params().at(n.id);
                Tensor<T> dw(p[0].shape), db(p[1].shape);
                detail::conv_backward(n, ws.act[n.inputs[0]], p[0], dy, ensure(n.inputs[0]), dw,
                                      db);
                grads[n.id] = {std::move(dw), std::move(db)};
                break;
            }
            case OpKind::dense: {
                if (n.spec.activation == Activation::relu) {
                    const Tensor<T>& y = ws.act[ri];
                    for (size_t k = 0; k < dy.data.size(); ++k)
                        if (y.data[k] <= T(0)) dy.data[k] = T(0);
                }
                const auto& p = m.params().at(n.id);
                const int IN = p[0].shape[0], OUT = p[0].shape[1];
                const int N = dy.shape[0];
                const Tensor<T>& x = ws.act[n.inputs[0]];
                Tensor<T> dw(p[0].shape), db(p[1].shape);
                Tensor<T>& dx = ensure(n.inputs[0]);
                for (int ni = 0; ni < N; ++ni) {
                    const T* gr = &dy.data[static_cast<int64_t>(ni) * OUT];
                    const T* row = &x.data[static_cast<int64_t>(ni) * IN];
                    T* dxrow = &dx.data[static_cast<int64_t>(ni) * IN];
                    for (int j = 0; j < OUT; ++j) db.data[j] += gr[j];
                    for (int k = 0; k < IN; ++k) {
                        const T* wrow = &p[0].data[static_cast<int64_t>(k) * OUT];
                        T* dwrow = &dw.data[static_cast<int64_t>(k) * OUT];
                        T acc = 0;
                        for (int j = 0; j < OUT; ++j) {
                            acc += wrow[j] * gr[j];
                            dwrow[j] += row[k] * gr[j];
                        }
                        dxrow[k] += acc;
                    }
                }
                grads[n.id] = {std::move(dw), std::move(db)};
                break;
            }
            case OpKind::pool: {
                Tensor<T>& dx = ensure(n.inputs[0]);
                if (n.spec.pool_mode == PoolMode::max) {
                    const auto& amax = ws.argmax[ri];
                    for (size_t k = 0; k < dy.data.size(); ++k) dx.data[amax[k]] += dy.data[k];
                } else {
                    const Tensor<T>& x = ws.act[n.inputs[0]];
                    const int WH = n.spec.window[0], WW = n.spec.window[1];
                    const int SH = n.spec.pool_stride[0], SW = n.spec.pool_stride[1];
                    const T inv = T(1) / static_cast<T>(WH * WW);
                    const int OH = dy.shape[1], OW = dy.shape[2], C = dy.shape[3];
                    for (int ni = 0; ni < dy.shape[0]; ++ni)
                        for (int oh = 0; oh < OH; ++oh)
                            for (int ow = 0; ow < OW; ++ow)
                                for (int c = 0; c < C; ++c) {
                                    const T gv = dy.at4(ni, oh, ow, c) * inv;
                                    for (int a = 0; a < WH; ++a)
                                        for (int bcol = 0; bcol < WW; ++bcol)
                                            dx.at4(ni, oh * SH + a, ow * SW + bcol, c) += gv;
                                }
                    (void)x;
                }
                break;
            }
            case OpKind::flatten: {
                Tensor<T>& dx = ensure(n.inputs[0]);
                for (size_t k = 0; k < dy.data.size(); ++k) dx.data[k] += dy.data[k];
                break;
            }
            case OpKind::dropout: {
                Tensor<T>& dx = ensure(n.inputs[0]);
                if (ws.cache[ri].data.empty()) {
                    for (size_t k = 0; k < dy.data.size(); ++k) dx.data[k] += dy.data[k];
                } else {
                    const Tensor<T>& mask = ws.cache[ri];
                    for (size_t k = 0; k < dy.data.size(); ++k)
                        dx.data[k] += dy.data[k] * mask.data[k];
                }
                break;
            }
            case OpKind::batchnorm: {
                const auto& p = m.params().at(n.id);
                const Tensor<T>& xhat = ws.cache[ri];
                const std::vector<T>& invstd = ws.invstd[ri];
                const int C = dy.shape[3];
                const int64_t M = dy.numel() / C;
                Tensor<T> dgamma({C}), dbeta({C});
                for (int64_t k = 0; k < dy.numel(); ++k) {
                    dgamma.data[k % C] += dy.data[k] * xhat.data[k];
                    dbeta.data[k % C] += dy.data[k];
                }
                Tensor<T>& dx = ensure(n.inputs[0]);
                if (ws.training) {
                    for (int64_t k = 0; k < dy.numel(); ++k) {
                        const int c = k % C;
                        dx.data[k] += p[0].data[c] * invstd[c] / static_cast<T>(M) *
                                      (static_cast<T>(M) * dy.data[k] - dbeta.data[c] -
                                       xhat.data[k] * dgamma.data[c]);
                    }
                } else {
                    for (int64_t k = 0; k < dy.numel(); ++k) {
                        const int c = k % C;
                        dx.data[k] += dy.data[k] * p[0].data[c] * invstd[c];
                    }
                }
                grads[n.id] = {std::move(dgamma), std::move(dbeta)};
                break;
            }
            case OpKind::add: {
                for (int idx : n.inputs) {
                    Tensor<T>& dx = ensure(idx);
                    for (size_t k = 0; k < dy.data.size(); ++k) dx.data[k] += dy.data[k];
                }
                break;
            }
            case OpKind::concat: {
                const int N = dy.shape[0], OH = dy.shape[1], OW = dy.shape[2];
                int offset = 0;
                for (int idx : n.inputs) {
                    Tensor<T>& dx = ensure(idx);
                    const int xc = dx.shape[3];
                    for (int ni = 0; ni < N; ++ni)
                        for (int h = 0; h < OH; ++h)
                            for (int w = 0; w < OW; ++w)
                                for (int c = 0; c < xc; ++c)
                                    dx.at4(ni, h, w, c) += dy.at4(ni, h, w, offset + c);
                    offset += xc;
                }
                break;
            }
            case OpKind::relu: {
                const Tensor<T>& y = ws.act[ri];
                Tensor<T>& dx = ensure(n.inputs[0]);
                for (size_t k = 0; k < dy.data.size(); ++k)
                    if (y.data[k] > T(0)) dx.data[k] += dy.data[k];
                break;
            }
        }
    }
    return grads;
}

template <typename T>
struct BackwardResult {
    double loss = 0.0;
    ParamMap<T> grads;
};

// Training-mode loss and gradients for one batch.
template <typename T>
BackwardResult<T> backward(const ExecutableModel<T>& m, const std::vector<Tensor<T>>& inputs,
                           const std::vector<int>& labels, Rng* dropout_rng = nullptr) {
    Workspace<T> ws;
    ws.training = true;
    run_forward(m, inputs, ws, dropout_rng);
    const Tensor<T>& out = ws.act[m.graph().output_index];
    Tensor<T> logits;
    logits.shape = {out.shape[0], m.num_classes()};
    logits.data = out.data;
    Tensor<T> dlogits;
    BackwardResult<T> res;
    res.loss = softmax_cross_entropy(logits, labels, m.num_classes(), &dlogits);
    res.grads = run_backward(m, ws, dlogits);
    return res;
}

// --- Adam -------------------------------------------------------------------

template <typename T>
struct AdamState {
    ParamMap<T> m, v;
    int64_t t = 0;
};

template <typename T>
void adam_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& st,
               const TrainConfig& cfg) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (const auto& [id, gts] : grads) {
        auto& pts = params.at(id);
        auto& ms = st.m[id];
        auto& vs = st.v[id];
        if (ms.size() != gts.size()) {
            ms.clear();
            vs.clear();
            for (const Tensor<T>& g : gts) {
                ms.emplace_back(g.shape);
                vs.emplace_back(g.shape);
            }
        }
        for (size_t ti = 0; ti < gts.size(); ++ti) {
            const auto& g = gts[ti].data;
            auto& p = pts[ti].data;
            auto& mm = ms[ti].data;
            auto& vv = vs[ti].data;
            for (size_t k = 0; k < g.size(); ++k) {
                mm[k] = static_cast<T>(cfg.beta1) * mm[k] +
                        static_cast<T>(1.0 - cfg.beta1) * g[k];
                vv[k] = static_cast<T>(cfg.beta2) * vv[k] +
                        static_cast<T>(1.0 - cfg.beta2) * g[k] * g[k];
                const double mhat = static_cast<double>(mm[k]) / bc1;
                const double vhat = static_cast<double>(vv[k]) / bc2;
                p[k] -= static_cast<T>(cfg.learning_rate * mhat /
                                       (std::sqrt(vhat) + cfg.epsilon));
            }
        }
    }
}

// --- train / evaluate ---------------------------------------------------------

template <typename T>
double evaluate(const ExecutableModel<T>& m, const Batchset<T>& data) {
    if (data.size() == 0) throw data_error("evaluate: empty dataset");
    const int total = data.size();
    const int chunk = 256;
    int correct = 0;
    for (int start = 0; start < total; start += chunk) {
        std::vector<int> idx;
        for (int i = start; i < std::min(total, start + chunk); ++i) idx.push_back(i);
        Batchset<T> batch = gather(data, idx);
        Tensor<T> logits = forward(m, batch.inputs);
        const int classes = logits.shape[1];
        for (size_t n = 0; n < idx.size(); ++n) {
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (logits.at2(static_cast<int>(n), c) > logits.at2(static_cast<int>(n), best))
                    best = c;
            if (best == batch.labels[n]) correct++;
        }
    }
    return static_cast<double>(correct) / total;
}

// Seeded minibatch Adam. Shuffle and dropout streams are keyed on
// (config seed, epoch), so a run is a pure function of its inputs.
template <typename T>
History train(ExecutableModel<T>& m, const Batchset<T>& train_data,
              const Batchset<T>* val_data, const TrainConfig& cfg) {
    validate(cfg);
    if (train_data.size() == 0) throw data_error("train: empty dataset");
    AdamState<T> opt;
    History history;
    std::vector<int> order(train_data.size());
    for (int i = 0; i < train_data.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, "shuffle", epoch));
        Rng dropout_rng(mix_seed(cfg.seed, "dropout", epoch));
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int64_t seen = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int> idx(
                order.begin() + start,
                order.begin() + std::min(order.size(), start + cfg.batch_size));
            Batchset<T> batch = gather(train_data, idx);
            BackwardResult<T> res = backward(m, batch.inputs, batch.labels, &dropout_rng);
            if (!std::isfinite(res.loss))
                throw train_error("training diverged (non-finite loss) at epoch " +
                                  std::to_string(epoch));
            adam_step(m.params(), res.grads, opt, cfg);
            loss_sum += res.loss * idx.size();
            seen += idx.size();
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / seen;
        if (val_data) stats.val_accuracy = evaluate(m, *val_data);
        history.push_back(stats);
    }
    return history;
}

template <typename T>
History train(ExecutableModel<T>& m, const Batchset<T>& train_data, const TrainConfig& cfg) {
    return train(m, train_data, static_cast<const Batchset<T>*>(nullptr), cfg);
}

// --- gradient checking --------------------------------------------------------

// Central-difference check of dLoss/dparam on a deterministic coordinate
// subset. Dropout streams are re-seeded per evaluation so the loss is a fixed
// function of the parameters; batchnorm running stats are restored afterwards.
template <typename T>
double grad_check(ExecutableModel<T>& m, const Batchset<T>& sample, double eps,
                  int coords_per_tensor = 64, bool training = true) {
    static_assert(std::is_floating_point_v<T>);
    const ParamMap<T> state_backup = m.state();
    auto loss_of = [&]() {
        Rng rng(mix_seed(m.seed(), "grad-check"));
        Workspace<T> ws;
        ws.training = training;
        run_forward(m, sample.inputs, ws, &rng);
        const Tensor<T>& out = ws.act[m.graph().output_index];
        Tensor<T> logits;
        logits.shape = {out.shape[0], m.num_classes()};
        logits.data = out.data;
        return softmax_cross_entropy<T>(logits, sample.labels, m.num_classes(), nullptr);
    };

    ParamMap<T> analytic;
    {
        Rng rng(mix_seed(m.seed(), "grad-check"));
        Workspace<T> ws;
        ws.training = training;
        run_forward(m, sample.inputs, ws, &rng);
        const Tensor<T>& out = ws.act[m.graph().output_index];
        Tensor<T> logits;
        logits.shape = {out.shape[0], m.num_classes()};
        logits.data = out.data;
        Tensor<T> dlogits;
        softmax_cross_entropy(logits, sample.labels, m.num_classes(), &dlogits);
        analytic = run_backward(m, ws, dlogits);
    }

    double max_rel = 0.0;
    for (auto& [id, tensors] : m.params()) {
        auto ga = analytic.find(id);
        for (size_t ti = 0; ti < tensors.size(); ++ti) {
            const int64_t numel = tensors[ti].numel();
            std::vector<int64_t> coords;
            if (numel <= coords_per_tensor) {
                for (int64_t k = 0; k < numel; ++k) coords.push_back(k);
            } else {
                Rng rng(mix_seed(m.seed(), "grad-check-coords/" + id, ti));
                for (int k = 0; k < coords_per_tensor; ++k)
                    coords.push_back(static_cast<int64_t>(rng.below(numel)));
            }
            for (int64_t k : coords) {
                T& theta = tensors[ti].data[k];
                const T orig = theta;
                theta = orig + static_cast<T>(eps);
                const double fp = loss_of();
                theta = orig - static_cast<T>(eps);
                const double fm = loss_of();
                theta = orig;
                const double fd = (fp - fm) / (2.0 * eps);
                const double an = ga == analytic.end()
                                      ? 0.0
                                      : static_cast<double>(ga->second[ti].data[k]);
                const double denom = std::max(std::abs(fd), std::abs(an));
                if (denom < 1e-10) continue;
                max_rel = std::max(max_rel, std::abs(fd - an) / denom);
            }
        }
    }
    m.state() = state_backup;
    return max_rel;
}

// --- snapshots ----------------------------------------------------------------

// Per-node tensors, trainable parameters first, then persistent state
// (batchnorm running stats). This is the unit of inheritance and persistence.
using Snapshot = std::map<std::string, std::vector<Tensor<float>>>;

template <typename T>
Snapshot snapshot(const ExecutableModel<T>& m) {
    Snapshot snap;
    for (const auto& [id, tensors] : m.params())
        for (const Tensor<T>& t : tensors) snap[id].push_back(t.template cast<float>());
    for (const auto& [id, tensors] : m.state())
        for (const Tensor<T>& t : tensors) snap[id].push_back(t.template cast<float>());
    return snap;
}

// Copies tensors for nodes whose id, tensor count and shapes all match;
// everything else keeps its fresh position-stable init. Returns the number of
// nodes copied.
template <typename T>
int inherit_into(ExecutableModel<T>& m, const Snapshot& prev) {
    int copied = 0;
    for (auto& [id, tensors] : m.params()) {
        auto it = prev.find(id);
        if (it == prev.end()) continue;
        const size_t nstate = m.state().count(id) ? m.state().at(id).size() : 0;
        if (it->second.size() != tensors.size() + nstate) continue;
        bool match = true;
        for (size_t ti = 0; ti < tensors.size() && match; ++ti)
            match = tensors[ti].shape == it->second[ti].shape;
        if (nstate) {
            auto& st = m.state().at(id);
            for (size_t ti = 0; ti < nstate && match; ++ti)
                match = st[ti].shape == it->second[tensors.size() + ti].shape;
        }
        if (!match) continue;
        for (size_t ti = 0; ti < tensors.size(); ++ti)
            tensors[ti] = it->second[ti].template cast<T>();
        if (nstate) {
            auto& st = m.state().at(id);
            for (size_t ti = 0; ti < nstate; ++ti)
                st[ti] = it->second[tensors.size() + ti].template cast<T>();
        }
        copied++;
    }
    return copied;
}

// Strict restore: every parameterized node must be present with matching shapes.
template <typename T>
void restore(ExecutableModel<T>& m, const Snapshot& snap) {
    const size_t want = m.params().size();
    const int copied = inherit_into(m, snap);
    if (static_cast<size_t>(copied) != want)
        throw config_error("restore: snapshot does not cover the model (" +
                           std::to_string(copied) + "/" + std::to_string(want) +
                           " nodes matched)");
}

}  // namespace xcnn
