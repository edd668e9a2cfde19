// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nevrf/error.hpp"
#include "nevrf/scene_model.hpp"

namespace nevrf {

/// Shift b in alpha = 1 - exp(-softplus(raw + b) * step).
inline constexpr double kDefaultDensityShift = -2.0;
/// Raw density treated as empty space: softplus(-6 + b) is ~3e-4.
inline constexpr double kEmptyRawDensity = -6.0;

struct GridDims {
    int nx = 2;
    int ny = 2;
    int nz = 2;

    std::size_t count() const { return static_cast<std::size_t>(nx) * ny * nz; }
    int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    bool operator==(const GridDims&) const = default;
};

/// Node-centered dense grid of raw (pre-activation) densities over a box.
/// Node (i, j, k) sits at bbox.min + (i, j, k) * voxel_size; storage is x-fastest.
template <typename T>
class BasicDensityGrid {
public:
    BasicDensityGrid() = default;

    BasicDensityGrid(GridDims dims, Aabb bbox, T fill = T(kEmptyRawDensity))
        : dims_(dims), bbox_(std::move(bbox)), values_(dims.count(), fill) {
        validate();
    }

    BasicDensityGrid(GridDims dims, Aabb bbox, std::vector<T> values)
        : dims_(dims), bbox_(std::move(bbox)), values_(std::move(values)) {
        if (values_.size() != dims_.count()) throw Error(ErrorKind::ShapeError, "grid value count mismatch");
        validate();
    }

    const GridDims& dims() const noexcept { return dims_; }
    const Aabb& bbox() const noexcept { return bbox_; }
    std::span<const T> values() const noexcept { return values_; }
    std::span<T> values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims_.ny + j) * dims_.nx + i;
    }
    T& at(int i, int j, int k) { return values_[index(i, j, k)]; }
    const T& at(int i, int j, int k) const { return values_[index(i, j, k)]; }

    Vec3 voxel_size() const {
        return Vec3(bbox_.extent().x() / (dims_.nx - 1), bbox_.extent().y() / (dims_.ny - 1),
                    bbox_.extent().z() / (dims_.nz - 1));
    }
    Vec3 node_position(int i, int j, int k) const {
        return bbox_.min + voxel_size().cwiseProduct(Vec3(i, j, k));
    }

    template <typename U>
    BasicDensityGrid<U> cast() const {
        return BasicDensityGrid<U>(dims_, bbox_, std::vector<U>(values_.begin(), values_.end()));
    }

    bool operator==(const BasicDensityGrid& other) const {
        return dims_ == other.dims_ && bbox_.min == other.bbox_.min && bbox_.max == other.bbox_.max &&
               values_ == other.values_;
    }

private:
    void validate() const {
        if (dims_.nx < 2 || dims_.ny < 2 || dims_.nz < 2) throw Error(ErrorKind::InvalidArgument, "grid dims < 2");
        if (!(bbox_.min.array() < bbox_.max.array()).all()) {
            throw Error(ErrorKind::InvalidArgument, "grid bbox min must be below max");
        }
    }

    GridDims dims_;
    Aabb bbox_;
    std::vector<T> values_;
};

using DensityGrid = BasicDensityGrid<float>;

/// The 8 corner nodes around a point and their trilinear coefficients.
struct TrilinearWeights {
    std::array<std::size_t, 8> index;
    std::array<double, 8> weight;
};

/// Trilinear coefficients for a point in continuous index space (u = (x - min) / voxel).
/// Returns nullopt outside [0, n-1] on any axis.
std::optional<TrilinearWeights> trilinear_weights_index(const GridDims& dims, const Vec3& u);

/// Trilinear coefficients for a world-space point; nullopt outside the bbox.
template <typename T>
std::optional<TrilinearWeights> trilinear_weights(const BasicDensityGrid<T>& grid, const Vec3& x) {
    const Vec3 u = (x - grid.bbox().min).cwiseQuotient(grid.voxel_size());
    return trilinear_weights_index(grid.dims(), u);
}

/// Trilinear interpolation of raw density; points outside the bbox read `empty_raw`.
template <typename T>
T interp_density(const BasicDensityGrid<T>& grid, const Vec3& x, T empty_raw = T(kEmptyRawDensity)) {
    const auto w = trilinear_weights(grid, x);
    if (!w) return empty_raw;
    const auto values = grid.values();
    T sum = T(0);
    for (int c = 0; c < 8; ++c) sum += T(w->weight[c]) * values[w->index[c]];
    return sum;
}

/// Backward of interp_density: d interp / d value[index[c]] = weight[c].
/// Throws OutOfBounds outside the bbox (no gradient flows to empty space).
template <typename T>
TrilinearWeights interp_gradient(const BasicDensityGrid<T>& grid, const Vec3& x) {
    auto w = trilinear_weights(grid, x);
    if (!w) throw Error(ErrorKind::OutOfBounds, "interp_gradient point outside grid bbox");
    return *w;
}

template <typename T>
T softplus(T x) {
    using std::exp;
    using std::log1p;
    return (x > T(0) ? x : T(0)) + log1p(exp(-(x > T(0) ? x : -x)));
}

template <typename T>
T sigmoid(T x) {
    using std::exp;
    return x >= T(0) ? T(1) / (T(1) + exp(-x)) : exp(x) / (T(1) + exp(x));
}

/// alpha = 1 - exp(-softplus(raw + shift) * step); monotone in raw, in [0, 1).
template <typename T>
T raw_to_alpha(T raw, T step, T shift = T(kDefaultDensityShift)) {
    using std::expm1;
    return -expm1(-softplus(raw + shift) * step);
}

/// d alpha / d raw = (1 - alpha) * step * sigmoid(raw + shift).
template <typename T>
T raw_to_alpha_grad(T raw, T step, T shift = T(kDefaultDensityShift)) {
    using std::exp;
    return exp(-softplus(raw + shift) * step) * step * sigmoid(raw + shift);
}

/// One grid per frame, all with identical dims and bbox.
struct AlignedGroupGrids {
    std::vector<DensityGrid> grids;

    const GridDims& dims() const { return grids.at(0).dims(); }
    const Aabb& bbox() const { return grids.at(0).bbox(); }
};

/// Resamples grids onto the union of their boxes, snapped outward to the first
/// grid's voxel size. Space outside an input box is filled with `empty_raw`.
AlignedGroupGrids align_group(const std::vector<DensityGrid>& grids, float empty_raw = float(kEmptyRawDensity));

/// Raw grid dump: "NVGD", dims 3 x u32, bbox 6 x f32, values f32 (x-fastest).
std::vector<std::uint8_t> encode_grid_dump(const DensityGrid& grid);
DensityGrid decode_grid_dump(std::span<const std::uint8_t> bytes);
void write_grid_dump(const std::filesystem::path& path, const DensityGrid& grid);
DensityGrid read_grid_dump(const std::filesystem::path& path);

} // namespace nevrf
