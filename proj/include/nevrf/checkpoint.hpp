// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nevrf/radiance_blending.hpp"
#include "nevrf/replay_trainer.hpp"

namespace nevrf {

/// Network weights plus the training config and stream position after a group.
struct Checkpoint {
    TrainConfig config;
    BlendNetwork<float> net;
    int groups_done = 0;
    int group_start = 0; ///< first frame of the last trained group
    int group_frames = 0;
};

/// "NVCK", u32 version, u32 JSON length, JSON header, then per block a u64
/// count and f32 values (encoder, then MLP).
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

} // namespace nevrf
