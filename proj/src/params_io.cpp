// SPDX-License-Identifier: Apache-2.0

#include "xcnn/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace xcnn {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

void put_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t get_u32(std::ifstream& in, const std::string& what) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw data_error("parameter container: truncated while reading " + what);
    return v;
}

}  // namespace

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open \"" + path.string() + "\" for writing");
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(snap.size()));
    for (const auto& [id, tensors] : snap) {  // std::map: sorted, deterministic
        put_u32(out, static_cast<uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        put_u32(out, static_cast<uint32_t>(tensors.size()));
        for (const Tensor<float>& t : tensors) {
            put_u32(out, static_cast<uint32_t>(t.shape.size()));
            for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        }
    }
    if (!out) throw data_error("write failed for \"" + path.string() + "\"");
}

Snapshot load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open \"" + path.string() + "\"");
    const uint32_t version = get_u32(in, "format version");
    if (version != 1)
        throw data_error("parameter container: unsupported format version " +
                         std::to_string(version));
    const uint32_t node_count = get_u32(in, "node count");
    Snapshot snap;
    for (uint32_t n = 0; n < node_count; ++n) {
        const uint32_t id_len = get_u32(in, "id length");
        std::string id(id_len, '\0');
        if (!in.read(id.data(), id_len))
            throw data_error("parameter container: truncated node id");
        const uint32_t tensor_count = get_u32(in, "tensor count");
        std::vector<Tensor<float>> tensors;
        for (uint32_t t = 0; t < tensor_count; ++t) {
            const uint32_t rank = get_u32(in, "rank");
            std::vector<int> shape;
            int64_t numel = 1;
            for (uint32_t r = 0; r < rank; ++r) {
                const uint32_t d = get_u32(in, "dimension");
                shape.push_back(static_cast<int>(d));
                numel *= d;
            }
            Tensor<float> tensor;
            tensor.shape = std::move(shape);
            tensor.data.resize(static_cast<size_t>(numel));
            if (!in.read(reinterpret_cast<char*>(tensor.data.data()),
                         static_cast<std::streamsize>(numel * sizeof(float))))
                throw data_error("parameter container: truncated tensor data");
            tensors.push_back(std::move(tensor));
        }
        snap[id] = std::move(tensors);
    }
    return snap;
}

}  // namespace xcnn
