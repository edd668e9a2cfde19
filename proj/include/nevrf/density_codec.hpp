// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nevrf/density_grid.hpp"

namespace nevrf {

inline constexpr int kDefaultBlockSize = 8;
inline constexpr double kDefaultEta = 0.2;
inline constexpr std::uint32_t kCodecVersion = 1;

using FloatRowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BlockLayout {
    int block_size = kDefaultBlockSize;
    int frames = 0;
    GridDims dims;         ///< grid dims
    std::array<int, 3> blocks{}; ///< blocks per axis, ceil(dim / s)

    std::size_t blocks_per_frame() const {
        return static_cast<std::size_t>(blocks[0]) * blocks[1] * blocks[2];
    }
    std::size_t rows() const { return blocks_per_frame() * static_cast<std::size_t>(frames); }
    std::size_t row_width() const { return static_cast<std::size_t>(block_size) * block_size * block_size; }
};

BlockLayout make_layout(const GridDims& dims, int frames, int block_size);

/// Rows are s^3 blocks ordered (frame, bz, by, bx), x-fastest inside a block.
/// Cells past the grid edge hold `pad_value`.
FloatRowMatrix blockify(const AlignedGroupGrids& grids, int block_size, BlockLayout* layout_out = nullptr,
                        float pad_value = float(kEmptyRawDensity));

/// Inverse of blockify; padding cells are dropped.
AlignedGroupGrids unblockify(const FloatRowMatrix& m, const BlockLayout& layout, const Aabb& bbox);

/// 1 for rows whose raw-density sum is strictly below zero.
std::vector<std::uint8_t> classify_empty(const FloatRowMatrix& m);

/// k = ceil(eta * min(rows, s^3)), clamped to [1, min(rows, s^3)].
std::uint32_t truncation_rank(double eta, std::size_t rows, std::size_t row_width);

struct CompressedDensityGroup {
    GridDims dims;
    std::array<float, 6> bbox{}; ///< min xyz, max xyz
    std::uint32_t frames = 0;
    std::uint32_t block_size = kDefaultBlockSize;
    float eta = float(kDefaultEta);
    std::uint32_t k = 0;
    std::uint64_t n_v = 0;
    float empty_fill = float(kEmptyRawDensity);
    std::vector<std::uint64_t> kept_rows; ///< ascending
    std::vector<float> sigma;             ///< k
    std::vector<float> bt;                ///< k x s^3, row-major
    std::vector<float> u_kept;            ///< kept x k, row-major

    Aabb aabb() const;
    BlockLayout layout() const;
    bool operator==(const CompressedDensityGroup&) const = default;
};

struct CompressOptions {
    int block_size = kDefaultBlockSize;
    double eta = kDefaultEta;
    float empty_fill = float(kEmptyRawDensity);
};

/// Truncated SVD of the block matrix with empty rows pruned from U.
CompressedDensityGroup compress(const AlignedGroupGrids& grids, const CompressOptions& options = {});

/// Kept rows from U diag(sigma) B^T; pruned rows become `empty_fill`.
AlignedGroupGrids decompress(const CompressedDensityGroup& c);

/// Rank-k reconstruction of every row (pruned rows included), used for diagnostics.
FloatRowMatrix reconstruct_rows(const CompressedDensityGroup& c, bool fill_pruned);

std::vector<std::uint8_t> serialize(const CompressedDensityGroup& c);
CompressedDensityGroup deserialize(std::span<const std::uint8_t> bytes);

/// Fixed header size of the container in bytes.
inline constexpr std::size_t kCodecHeaderBytes = 4 + 4 + 12 + 24 + 4 + 4 + 4 + 4 + 8 + 8 + 4;

/// Expected serialized size for given row count and rank.
std::size_t container_bytes(std::size_t kept_rows, std::size_t k, std::size_t row_width);

void write_container(const std::filesystem::path& path, const CompressedDensityGroup& c);
CompressedDensityGroup read_container(const std::filesystem::path& path);

} // namespace nevrf
