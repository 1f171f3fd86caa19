// SPDX-License-Identifier: Apache-2.0
//
// Flat binary container for trained parameters. Little-endian layout:
//   u32 format_version (=1), u32 node_count,
//   per node (sorted by id): u32 id_len, id bytes,
//     u32 tensor_count, per tensor: u32 rank, u32 dims[rank], f32 data[numel].
#pragma once

#include <filesystem>
#include <string>

#include "xcnn/engine.hpp"

namespace xcnn {

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot load_snapshot(const std::filesystem::path& path);

}  // namespace xcnn
