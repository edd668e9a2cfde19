// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations. None of these call into the library
// code they check; they share only the plain data types.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "nevrf/density_grid.hpp"
#include "nevrf/neural_core.hpp"
#include "nevrf/scene_model.hpp"

namespace oracle {

using nevrf::Vec2;
using nevrf::Vec3;

/// Homogeneous 3x4 projection P = [K | 0] * T applied to (x, 1).
inline std::pair<Vec2, double> project(const nevrf::Camera& cam, const Vec3& x) {
    Eigen::Matrix<double, 3, 4> k0 = Eigen::Matrix<double, 3, 4>::Zero();
    k0.leftCols<3>() = cam.intrinsics();
    const Eigen::Matrix<double, 3, 4> p = k0 * cam.extrinsics();
    const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
    const Eigen::Vector3d q = p * xh;
    return {Vec2(q.x() / q.z(), q.y() / q.z()), q.z()};
}

/// Camera on a sphere of `radius` around the origin, looking at a jittered target.
inline nevrf::Camera random_camera(std::mt19937_64& rng, int width = 32, int height = 24, double radius = 3.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 dir;
    do {
        dir = Vec3(u(rng), u(rng), u(rng));
    } while (dir.norm() < 0.2 || std::abs(dir.normalized().z()) > 0.9);
    const Vec3 eye = radius * dir.normalized();
    const Vec3 target(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
    std::uniform_real_distribution<double> f(20.0, 60.0);
    return nevrf::Camera::look_at(eye, target, Vec3(0, 0, 1), f(rng), width, height);
}

/// `n` inward-looking cameras on a horizontal ring, with a small elevation.
inline std::vector<nevrf::Camera> ring_cameras(int n, int width, int height, double focal, double radius = 3.0) {
    std::vector<nevrf::Camera> cams;
    for (int i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n;
        const Vec3 eye(radius * std::cos(a), radius * std::sin(a), 0.4);
        cams.push_back(nevrf::Camera::look_at(eye, Vec3::Zero(), Vec3(0, 0, 1), focal, width, height));
    }
    return cams;
}

/// Trilinear value from the 8 cell corners, computed without the library's weight helper.
template <typename T>
double trilinear(const nevrf::BasicDensityGrid<T>& g, const Vec3& x, double empty) {
    const auto& d = g.dims();
    const Vec3 lo = g.bbox().min;
    const Vec3 hi = g.bbox().max;
    if ((x.array() < lo.array()).any() || (x.array() > hi.array()).any()) return empty;
    double u[3];
    int i0[3];
    for (int a = 0; a < 3; ++a) {
        const double cell = (hi[a] - lo[a]) / (d[a] - 1);
        const double c = (x[a] - lo[a]) / cell;
        i0[a] = std::min(static_cast<int>(std::floor(c)), d[a] - 2);
        u[a] = c - i0[a];
    }
    double sum = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? u[0] : 1 - u[0]) * (dy ? u[1] : 1 - u[1]) * (dz ? u[2] : 1 - u[2]);
                sum += w * double(g.at(i0[0] + dx, i0[1] + dy, i0[2] + dz));
            }
    return sum;
}

/// Bilinear lookup with texel centers at +0.5 and clamped borders.
template <typename T>
std::vector<double> bilinear(const nevrf::TensorBuffer<T>& map, const Vec2& p) {
    const int h = static_cast<int>(map.height());
    const int w = static_cast<int>(map.width());
    const int c = static_cast<int>(map.channels());
    const double x = p.x() - 0.5;
    const double y = p.y() - 0.5;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double ax = x - x0;
    const double ay = y - y0;
    auto tex = [&](int yy, int xx, int ch) {
        yy = std::clamp(yy, 0, h - 1);
        xx = std::clamp(xx, 0, w - 1);
        return double(map.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), static_cast<std::size_t>(ch)));
    };
    std::vector<double> out(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        out[ch] = (1 - ax) * (1 - ay) * tex(y0, x0, ch) + ax * (1 - ay) * tex(y0, x0 + 1, ch) +
                  (1 - ax) * ay * tex(y0 + 1, x0, ch) + ax * ay * tex(y0 + 1, x0 + 1, ch);
    }
    return out;
}

inline std::vector<long double> softmax(const std::vector<double>& z) {
    long double m = z.front();
    for (double v : z) m = std::max<long double>(m, v);
    std::vector<long double> e(z.size());
    long double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(static_cast<long double>(z[i]) - m));
    for (auto& v : e) v /= s;
    return e;
}

/// Same-padded 3x3 convolution; weight[o][(ky*3+kx)*C + c].
inline std::vector<double> conv3x3(const std::vector<double>& in, int h, int w, int c, const std::vector<double>& weight,
                                   const std::vector<double>& bias, int out_c, bool relu) {
    std::vector<double> out(static_cast<std::size_t>(h) * w * out_c, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < out_c; ++o) {
                double s = bias[o];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sy = y + ky - 1;
                        const int sx = x + kx - 1;
                        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                        for (int ch = 0; ch < c; ++ch)
                            s += weight[static_cast<std::size_t>(o) * 9 * c + (ky * 3 + kx) * c + ch] *
                                 in[(static_cast<std::size_t>(sy) * w + sx) * c + ch];
                    }
                out[(static_cast<std::size_t>(y) * w + x) * out_c + o] = relu ? std::max(0.0, s) : s;
            }
    return out;
}

/// Dense layers with ReLU between, evaluated with scalar loops.
template <typename T>
std::vector<double> mlp(const nevrf::MlpParams<T>& p, const std::vector<double>& in) {
    std::vector<double> a = in;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const auto w = p.weight(l);
        const auto b = p.bias(l);
        std::vector<double> z(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            double s = double(b(o));
            for (Eigen::Index i = 0; i < w.cols(); ++i) s += double(w(o, i)) * a[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = (l + 1 < p.layer_count()) ? std::max(0.0, s) : s;
        }
        a = std::move(z);
    }
    return a;
}

/// Singular values (descending) by one-sided Jacobi rotations in long double.
inline std::vector<long double> singular_values(std::vector<long double> a, std::size_t rows, std::size_t cols) {
    if (cols > rows) {
        std::vector<long double> t(a.size());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
        return singular_values(std::move(t), cols, rows);
    }
    // orthogonalise columns of the row-major rows x cols matrix
    for (int sweep = 0; sweep < 60; ++sweep) {
        long double off = 0.0L;
        for (std::size_t p = 0; p + 1 < cols; ++p)
            for (std::size_t q = p + 1; q < cols; ++q) {
                long double alpha = 0.0L, beta = 0.0L, gamma = 0.0L;
                for (std::size_t r = 0; r < rows; ++r) {
                    const long double x = a[r * cols + p];
                    const long double y = a[r * cols + q];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if (gamma == 0.0L) continue;
                off = std::max(off, std::fabs(gamma) / std::sqrt(alpha * beta));
                const long double zeta = (beta - alpha) / (2.0L * gamma);
                const long double t = (zeta >= 0 ? 1.0L : -1.0L) / (std::fabs(zeta) + std::sqrt(1.0L + zeta * zeta));
                const long double c = 1.0L / std::sqrt(1.0L + t * t);
                const long double sn = c * t;
                for (std::size_t r = 0; r < rows; ++r) {
                    const long double x = a[r * cols + p];
                    const long double y = a[r * cols + q];
                    a[r * cols + p] = c * x - sn * y;
                    a[r * cols + q] = sn * x + c * y;
                }
            }
        if (off < 1e-15L) break;
    }
    std::vector<long double> sv(cols);
    for (std::size_t c = 0; c < cols; ++c) {
        long double n = 0.0L;
        for (std::size_t r = 0; r < rows; ++r) n += a[r * cols + c] * a[r * cols + c];
        sv[c] = std::sqrt(n);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    sv.resize(std::min(rows, cols));
    return sv;
}

/// Relative error with an absolute floor, for gradient audits.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Unique scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    const auto p = std::filesystem::temp_directory_path() / ("nevrf_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(p);
    return p;
}

} // namespace oracle
