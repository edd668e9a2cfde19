// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/density_codec.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nevrf/binary_io.hpp"

namespace nevrf {

BlockLayout make_layout(const GridDims& dims, int frames, int block_size) {
    if (block_size < 1) throw Error(ErrorKind::InvalidArgument, "block size must be >= 1");
    BlockLayout l;
    l.block_size = block_size;
    l.frames = frames;
    l.dims = dims;
    for (int a = 0; a < 3; ++a) l.blocks[a] = (dims[a] + block_size - 1) / block_size;
    return l;
}

FloatRowMatrix blockify(const AlignedGroupGrids& grids, int block_size, BlockLayout* layout_out, float pad_value) {
    if (grids.grids.empty()) throw Error(ErrorKind::InvalidArgument, "blockify needs at least one grid");
    for (const auto& g : grids.grids) {
        if (!(g.dims() == grids.dims())) throw Error(ErrorKind::ShapeError, "blockify needs aligned grids");
    }
    const BlockLayout l = make_layout(grids.dims(), static_cast<int>(grids.grids.size()), block_size);
    const int s = block_size;
    FloatRowMatrix m(static_cast<Eigen::Index>(l.rows()), static_cast<Eigen::Index>(l.row_width()));
    Eigen::Index row = 0;
    for (const auto& g : grids.grids) {
        for (int bz = 0; bz < l.blocks[2]; ++bz)
            for (int by = 0; by < l.blocks[1]; ++by)
                for (int bx = 0; bx < l.blocks[0]; ++bx, ++row) {
                    float* out = m.row(row).data();
                    for (int z = 0; z < s; ++z)
                        for (int y = 0; y < s; ++y)
                            for (int x = 0; x < s; ++x) {
                                const int i = bx * s + x;
                                const int j = by * s + y;
                                const int kk = bz * s + z;
                                *out++ = (i < l.dims.nx && j < l.dims.ny && kk < l.dims.nz) ? g.at(i, j, kk)
                                                                                            : pad_value;
                            }
                }
    }
    if (layout_out) *layout_out = l;
    return m;
}

AlignedGroupGrids unblockify(const FloatRowMatrix& m, const BlockLayout& l, const Aabb& bbox) {
    if (static_cast<std::size_t>(m.rows()) != l.rows() || static_cast<std::size_t>(m.cols()) != l.row_width()) {
        throw Error(ErrorKind::ShapeError, "block matrix does not match layout");
    }
    const int s = l.block_size;
    AlignedGroupGrids out;
    Eigen::Index row = 0;
    for (int f = 0; f < l.frames; ++f) {
        DensityGrid g(l.dims, bbox);
        for (int bz = 0; bz < l.blocks[2]; ++bz)
            for (int by = 0; by < l.blocks[1]; ++by)
                for (int bx = 0; bx < l.blocks[0]; ++bx, ++row) {
                    const float* in = m.row(row).data();
                    for (int z = 0; z < s; ++z)
                        for (int y = 0; y < s; ++y)
                            for (int x = 0; x < s; ++x, ++in) {
                                const int i = bx * s + x;
                                const int j = by * s + y;
                                const int kk = bz * s + z;
                                if (i < l.dims.nx && j < l.dims.ny && kk < l.dims.nz) g.at(i, j, kk) = *in;
                            }
                }
        out.grids.push_back(std::move(g));
    }
    return out;
}

std::vector<std::uint8_t> classify_empty(const FloatRowMatrix& m) {
    std::vector<std::uint8_t> empty(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) sum += m(r, c);
        empty[static_cast<std::size_t>(r)] = sum < 0.0 ? 1 : 0;
    }
    return empty;
}

std::uint32_t truncation_rank(double eta, std::size_t rows, std::size_t row_width) {
    if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "eta must be in (0, 1]");
    const std::size_t bound = std::min(rows, row_width);
    // the small offset keeps eta values that are not exact in binary from rounding up a whole rank
    const double k = std::ceil(eta * static_cast<double>(bound) - 1e-4);
    return static_cast<std::uint32_t>(std::clamp<double>(k, 1.0, static_cast<double>(bound)));
}

Aabb CompressedDensityGroup::aabb() const {
    return Aabb{Vec3(bbox[0], bbox[1], bbox[2]), Vec3(bbox[3], bbox[4], bbox[5])};
}

BlockLayout CompressedDensityGroup::layout() const {
    return make_layout(dims, static_cast<int>(frames), static_cast<int>(block_size));
}

namespace {

struct Spectrum {
    Eigen::MatrixXd right; ///< n x k, columns are right singular vectors
    Eigen::VectorXd sigma; ///< k, descending
};

Spectrum jacobi_spectrum(const Eigen::MatrixXd& m, std::uint32_t k) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw Error(ErrorKind::SvdFailed, "Jacobi SVD did not converge");
    Spectrum s;
    s.right = svd.matrixV().leftCols(k);
    s.sigma = svd.singularValues().head(k);
    return s;
}

// Top-k right singular triplets from the n x n Gram matrix.
Spectrum gram_spectrum(const Eigen::MatrixXd& m, std::uint32_t k, bool& ill_conditioned) {
    const Eigen::MatrixXd gram = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) {
        ill_conditioned = true;
        return {};
    }
    const Eigen::Index n = gram.rows();
    Spectrum s;
    s.right.resize(n, k);
    s.sigma.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        const Eigen::Index src = n - 1 - static_cast<Eigen::Index>(i);
        s.right.col(i) = eig.eigenvectors().col(src);
        s.sigma[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[src]));
    }
    // A strongly negative eigenvalue means the Gram product broke down numerically.
    const double floor = -1e-8 * std::max(1.0, eig.eigenvalues()[n - 1]);
    ill_conditioned = !s.right.allFinite() || eig.eigenvalues()[n - k] < floor;
    return s;
}

} // namespace

CompressedDensityGroup compress(const AlignedGroupGrids& grids, const CompressOptions& options) {
    BlockLayout layout;
    const FloatRowMatrix m = blockify(grids, options.block_size, &layout, options.empty_fill);
    const std::size_t rows = static_cast<std::size_t>(m.rows());
    const std::size_t n = static_cast<std::size_t>(m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) throw Error(ErrorKind::InvalidArgument, "density values must be finite");
    }
    const std::uint32_t k = truncation_rank(options.eta, rows, n);
    const Eigen::MatrixXd md = m.cast<double>();

    Spectrum spec;
    bool fallback = rows <= n;
    if (!fallback) spec = gram_spectrum(md, k, fallback);
    if (fallback) spec = jacobi_spectrum(md, k);

    // Deterministic signs: the largest-magnitude entry of each right vector is positive.
    for (std::uint32_t i = 0; i < k; ++i) {
        Eigen::Index arg = 0;
        spec.right.col(i).cwiseAbs().maxCoeff(&arg);
        if (spec.right(arg, i) < 0.0) spec.right.col(i) *= -1.0;
    }
    // U = M V diag(1 / sigma); zero columns for a vanishing spectrum.
    Eigen::MatrixXd u = md * spec.right;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (spec.sigma[i] > 0.0) {
            u.col(i) /= spec.sigma[i];
        } else {
            u.col(i).setZero();
        }
    }

    const auto empty = classify_empty(m);
    CompressedDensityGroup c;
    c.dims = layout.dims;
    const Aabb& box = grids.bbox();
    c.bbox = {float(box.min.x()), float(box.min.y()), float(box.min.z()),
              float(box.max.x()), float(box.max.y()), float(box.max.z())};
    c.frames = static_cast<std::uint32_t>(layout.frames);
    c.block_size = static_cast<std::uint32_t>(options.block_size);
    c.eta = float(options.eta);
    c.k = k;
    c.n_v = rows;
    c.empty_fill = options.empty_fill;
    c.sigma.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) c.sigma[i] = float(spec.sigma[i]);
    c.bt.resize(static_cast<std::size_t>(k) * n);
    for (std::uint32_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) c.bt[i * n + j] = float(spec.right(static_cast<Eigen::Index>(j), i));
    for (std::size_t r = 0; r < rows; ++r) {
        if (empty[r]) continue;
        c.kept_rows.push_back(r);
        for (std::uint32_t i = 0; i < k; ++i) c.u_kept.push_back(float(u(static_cast<Eigen::Index>(r), i)));
    }
    return c;
}

FloatRowMatrix reconstruct_rows(const CompressedDensityGroup& c, bool fill_pruned) {
    const std::size_t n = static_cast<std::size_t>(c.block_size) * c.block_size * c.block_size;
    FloatRowMatrix m(static_cast<Eigen::Index>(c.n_v), static_cast<Eigen::Index>(n));
    m.setConstant(fill_pruned ? c.empty_fill : 0.0f);
    std::vector<double> acc(n);
    for (std::size_t r = 0; r < c.kept_rows.size(); ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::uint32_t i = 0; i < c.k; ++i) {
            const double coef = double(c.u_kept[r * c.k + i]) * double(c.sigma[i]);
            const float* b = c.bt.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += coef * double(b[j]);
        }
        float* out = m.row(static_cast<Eigen::Index>(c.kept_rows[r])).data();
        for (std::size_t j = 0; j < n; ++j) out[j] = float(acc[j]);
    }
    return m;
}

AlignedGroupGrids decompress(const CompressedDensityGroup& c) {
    return unblockify(reconstruct_rows(c, true), c.layout(), c.aabb());
}

std::size_t container_bytes(std::size_t kept_rows, std::size_t k, std::size_t row_width) {
    return kCodecHeaderBytes + 8 * kept_rows + 4 * (kept_rows * k + k + k * row_width);
}

std::vector<std::uint8_t> serialize(const CompressedDensityGroup& c) {
    ByteWriter w;
    w.put_bytes("NVDC");
    w.put<std::uint32_t>(kCodecVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.dims.nx));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.dims.ny));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.dims.nz));
    for (float v : c.bbox) w.put<float>(v);
    w.put<std::uint32_t>(c.frames);
    w.put<std::uint32_t>(c.block_size);
    w.put<float>(c.eta);
    w.put<std::uint32_t>(c.k);
    w.put<std::uint64_t>(c.n_v);
    w.put<std::uint64_t>(c.kept_rows.size());
    w.put<float>(c.empty_fill);
    w.put_span<std::uint64_t>(c.kept_rows);
    w.put_span<float>(c.sigma);
    w.put_span<float>(c.bt);
    w.put_span<float>(c.u_kept);
    return w.take();
}

CompressedDensityGroup deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.get_string(4) != "NVDC") throw Error(ErrorKind::FormatError, "bad container magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCodecVersion) {
        throw Error(ErrorKind::FormatError, "unsupported container version " + std::to_string(version));
    }
    CompressedDensityGroup c;
    const auto nx = r.get<std::uint32_t>();
    const auto ny = r.get<std::uint32_t>();
    const auto nz = r.get<std::uint32_t>();
    for (std::uint32_t d : {nx, ny, nz}) {
        if (d < 2 || d > 65536) throw Error(ErrorKind::FormatError, "container dims out of range");
    }
    c.dims = GridDims{int(nx), int(ny), int(nz)};
    for (float& v : c.bbox) v = r.get<float>();
    for (int a = 0; a < 3; ++a) {
        if (!(c.bbox[a] < c.bbox[a + 3])) throw Error(ErrorKind::FormatError, "container bbox is empty");
    }
    c.frames = r.get<std::uint32_t>();
    c.block_size = r.get<std::uint32_t>();
    c.eta = r.get<float>();
    c.k = r.get<std::uint32_t>();
    c.n_v = r.get<std::uint64_t>();
    const auto kept = r.get<std::uint64_t>();
    c.empty_fill = r.get<float>();
    if (c.frames < 1 || c.block_size < 1 || c.block_size > 64) {
        throw Error(ErrorKind::FormatError, "container frame count or block size out of range");
    }
    const BlockLayout layout = c.layout();
    const std::uint64_t width = layout.row_width();
    using Wide = unsigned __int128;
    const Wide rows = Wide(layout.blocks[0]) * Wide(layout.blocks[1]) * Wide(layout.blocks[2]) * Wide(c.frames);
    if (Wide(c.n_v) != rows) throw Error(ErrorKind::FormatError, "row count does not match dims");
    if (c.k < 1 || c.k > std::min<std::uint64_t>(c.n_v, width)) throw Error(ErrorKind::FormatError, "rank out of range");
    if (kept > c.n_v) throw Error(ErrorKind::FormatError, "kept row count exceeds row count");
    const Wide payload = Wide(kept) * 8 + Wide(c.k) * 4 + Wide(c.k) * width * 4 + Wide(kept) * c.k * 4;
    if (payload != Wide(r.remaining())) throw Error(ErrorKind::FormatError, "payload length does not match header");
    c.kept_rows = r.get_vector<std::uint64_t>(kept);
    for (std::size_t i = 0; i < c.kept_rows.size(); ++i) {
        if (c.kept_rows[i] >= c.n_v || (i > 0 && c.kept_rows[i] <= c.kept_rows[i - 1])) {
            throw Error(ErrorKind::FormatError, "kept row ids must be ascending and in range");
        }
    }
    c.sigma = r.get_vector<float>(c.k);
    c.bt = r.get_vector<float>(std::uint64_t(c.k) * width);
    c.u_kept = r.get_vector<float>(kept * c.k);
    if (r.remaining() != 0) throw Error(ErrorKind::FormatError, "trailing bytes in container");
    auto finite = [](const std::vector<float>& v) {
        return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
    };
    if (!finite(c.sigma) || !finite(c.bt) || !finite(c.u_kept) || !std::isfinite(c.empty_fill)) {
        throw Error(ErrorKind::FormatError, "non-finite factor values");
    }
    return c;
}

void write_container(const std::filesystem::path& path, const CompressedDensityGroup& c) {
    write_file_bytes(path.string(), serialize(c));
}

CompressedDensityGroup read_container(const std::filesystem::path& path) {
    return deserialize(read_file_bytes(path.string()));
}

} // namespace nevrf
