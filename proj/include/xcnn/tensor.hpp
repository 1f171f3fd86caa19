// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "xcnn/common.hpp"

namespace xcnn {

// Dense row-major tensor. Activations are (n, h, w, c); flattened features
// travel as (n, 1, 1, c).
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s)
        : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), T(0)) {}

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    int dim(size_t i) const { return shape[i]; }

    T& at4(int n, int h, int w, int c) {
        return data[((static_cast<int64_t>(n) * shape[1] + h) * shape[2] + w) * shape[3] + c];
    }
    const T& at4(int n, int h, int w, int c) const {
        return data[((static_cast<int64_t>(n) * shape[1] + h) * shape[2] + w) * shape[3] + c];
    }

    T& at2(int n, int c) { return data[static_cast<int64_t>(n) * shape[1] + c]; }
    const T& at2(int n, int c) const { return data[static_cast<int64_t>(n) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool operator==(const Tensor&) const = default;

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace xcnn
