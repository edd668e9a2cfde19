// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/density_grid.hpp"

#include <algorithm>
#include <cmath>

#include "nevrf/binary_io.hpp"

namespace nevrf {

std::optional<TrilinearWeights> trilinear_weights_index(const GridDims& dims, const Vec3& u) {
    std::array<int, 3> base{};
    std::array<double, 3> frac{};
    for (int axis = 0; axis < 3; ++axis) {
        const double hi = dims[axis] - 1;
        if (!(u[axis] >= 0.0 && u[axis] <= hi)) return std::nullopt;
        const int i0 = std::min(static_cast<int>(std::floor(u[axis])), dims[axis] - 2);
        base[axis] = i0;
        frac[axis] = u[axis] - i0;
    }
    TrilinearWeights w;
    const std::size_t nx = static_cast<std::size_t>(dims.nx);
    const std::size_t nxy = nx * static_cast<std::size_t>(dims.ny);
    const std::size_t origin = static_cast<std::size_t>(base[2]) * nxy + static_cast<std::size_t>(base[1]) * nx +
                               static_cast<std::size_t>(base[0]);
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1;
        const int dy = (c >> 1) & 1;
        const int dz = (c >> 2) & 1;
        w.index[c] = origin + static_cast<std::size_t>(dz) * nxy + static_cast<std::size_t>(dy) * nx +
                     static_cast<std::size_t>(dx);
        w.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
    }
    return w;
}

namespace {

bool same_layout(const DensityGrid& a, const DensityGrid& b) {
    return a.dims() == b.dims() && a.bbox().min == b.bbox().min && a.bbox().max == b.bbox().max;
}

// Snaps index coordinates that are within rounding noise of a node onto it.
double snap_index(double u) {
    const double r = std::round(u);
    return std::abs(u - r) < 1e-6 ? r : u;
}

} // namespace

AlignedGroupGrids align_group(const std::vector<DensityGrid>& grids, float empty_raw) {
    if (grids.empty()) throw Error(ErrorKind::InvalidArgument, "align_group needs at least one grid");
    const bool already_aligned = std::all_of(grids.begin(), grids.end(),
                                             [&](const DensityGrid& g) { return same_layout(g, grids.front()); });
    if (already_aligned) return AlignedGroupGrids{grids};

    const Vec3 voxel = grids.front().voxel_size();
    const Vec3 origin = grids.front().bbox().min;
    Vec3 union_min = grids.front().bbox().min;
    Vec3 union_max = grids.front().bbox().max;
    for (const auto& g : grids) {
        union_min = union_min.cwiseMin(g.bbox().min);
        union_max = union_max.cwiseMax(g.bbox().max);
    }

    GridDims dims;
    Vec3 lo;
    Vec3 hi;
    for (int axis = 0; axis < 3; ++axis) {
        const double a = std::floor((union_min[axis] - origin[axis]) / voxel[axis] + 1e-6);
        const double b = std::ceil((union_max[axis] - origin[axis]) / voxel[axis] - 1e-6);
        lo[axis] = origin[axis] + a * voxel[axis];
        hi[axis] = origin[axis] + b * voxel[axis];
        const int n = static_cast<int>(b - a) + 1;
        if (axis == 0) dims.nx = n;
        if (axis == 1) dims.ny = n;
        if (axis == 2) dims.nz = n;
    }
    const Aabb box{lo, hi};

    AlignedGroupGrids out;
    out.grids.reserve(grids.size());
    for (const auto& src : grids) {
        DensityGrid dst(dims, box, empty_raw);
        const Vec3 src_voxel = src.voxel_size();
        const auto src_values = src.values();
        for (int k = 0; k < dims.nz; ++k) {
            for (int j = 0; j < dims.ny; ++j) {
                for (int i = 0; i < dims.nx; ++i) {
                    const Vec3 p = lo + voxel.cwiseProduct(Vec3(i, j, k));
                    Vec3 u = (p - src.bbox().min).cwiseQuotient(src_voxel);
                    for (int axis = 0; axis < 3; ++axis) u[axis] = snap_index(u[axis]);
                    const auto w = trilinear_weights_index(src.dims(), u);
                    if (!w) continue;
                    double sum = 0.0;
                    for (int c = 0; c < 8; ++c) {
                        if (w->weight[c] != 0.0) sum += w->weight[c] * src_values[w->index[c]];
                    }
                    dst.at(i, j, k) = static_cast<float>(sum);
                }
            }
        }
        out.grids.push_back(std::move(dst));
    }
    return out;
}

std::vector<std::uint8_t> encode_grid_dump(const DensityGrid& grid) {
    ByteWriter w;
    w.put_bytes("NVGD");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.dims().nx));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.dims().ny));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.dims().nz));
    for (int axis = 0; axis < 3; ++axis) w.put<float>(static_cast<float>(grid.bbox().min[axis]));
    for (int axis = 0; axis < 3; ++axis) w.put<float>(static_cast<float>(grid.bbox().max[axis]));
    w.put_span<float>(grid.values());
    return w.take();
}

DensityGrid decode_grid_dump(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.get_string(4) != "NVGD") throw Error(ErrorKind::FormatError, "bad grid dump magic");
    GridDims dims;
    dims.nx = static_cast<int>(r.get<std::uint32_t>());
    dims.ny = static_cast<int>(r.get<std::uint32_t>());
    dims.nz = static_cast<int>(r.get<std::uint32_t>());
    Aabb box;
    for (int axis = 0; axis < 3; ++axis) box.min[axis] = r.get<float>();
    for (int axis = 0; axis < 3; ++axis) box.max[axis] = r.get<float>();
    for (int axis = 0; axis < 3; ++axis) {
        if (dims[axis] < 2 || dims[axis] > 65536) throw Error(ErrorKind::FormatError, "grid dump dims out of range");
    }
    auto values = r.get_vector<float>(dims.count());
    if (r.remaining() != 0) throw Error(ErrorKind::FormatError, "trailing bytes in grid dump");
    return DensityGrid(dims, box, std::move(values));
}

void write_grid_dump(const std::filesystem::path& path, const DensityGrid& grid) {
    write_file_bytes(path.string(), encode_grid_dump(grid));
}

DensityGrid read_grid_dump(const std::filesystem::path& path) {
    return decode_grid_dump(read_file_bytes(path.string()));
}

} // namespace nevrf
