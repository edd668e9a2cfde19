// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nevrf/neural_core.hpp"
#include "nevrf/scene_model.hpp"

namespace nevrf {

inline constexpr int kDefaultFeatureDim = 8;
inline constexpr int kDefaultSourceViews = 4;
inline constexpr int kBlendHiddenWidth = 32;

/// Per-view MLP input width: [f, cos, v, u].
constexpr int blend_input_width(int feature_dim) { return 3 * feature_dim + 1; }

/// Layer sizes of the shared per-view branch that emits one logit per view.
inline std::vector<int> blend_mlp_sizes(int feature_dim) {
    return {blend_input_width(feature_dim), kBlendHiddenWidth, kBlendHiddenWidth, 1};
}

enum class BlendMode {
    Network, ///< learned weights
    Uniform, ///< equal weights over the visible selected views
};

/// Views sorted by ascending angular difference; ties go to the lower index.
/// `candidates` lists eligible view ids; `exclude` is removed when present.
/// Views whose center coincides with the point are skipped.
std::vector<int> select_views(const Vec3& point, const Ray& ray, std::span<const Camera> cameras,
                              std::span<const int> candidates, int k, std::optional<int> exclude = std::nullopt);

/// All views of the frame are candidates.
std::vector<int> select_views(const Vec3& point, const Ray& ray, const MultiViewFrame& frame, int k,
                              std::optional<int> exclude = std::nullopt);

/// Features, colors and directions of the selected views at one point.
template <typename T>
struct ViewBundle {
    int k = 0;
    int feature_dim = 0;
    std::vector<int> view;            ///< k view ids
    std::vector<std::uint8_t> valid;  ///< k flags
    std::vector<T> feature;           ///< k x F
    std::vector<T> color;             ///< k x 3
    std::vector<T> cosine;            ///< k
    std::vector<BilinearTaps> taps;   ///< k, meaningful only for valid views

    void resize(int views, int features) {
        k = views;
        feature_dim = features;
        view.assign(views, -1);
        valid.assign(views, 0);
        feature.assign(static_cast<std::size_t>(views) * features, T(0));
        color.assign(static_cast<std::size_t>(views) * 3, T(0));
        cosine.assign(views, T(0));
        taps.assign(views, BilinearTaps{});
    }
    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto v : valid) n += v ? 1 : 0;
        return n;
    }
};

/// Projects `point` into each listed view and samples features and colors bilinearly.
/// Views where the point is behind the camera or outside the image are marked invalid.
/// `feature_maps` may be empty (features stay zero) for the uniform blend.
template <typename T>
void gather_bundle_into(const Vec3& point, const Ray& ray, std::span<const Camera> cameras,
                        std::span<const TensorBuffer<T>> images, std::span<const TensorBuffer<T>> feature_maps,
                        std::span<const int> view_ids, int feature_dim, ViewBundle<T>& out) {
    out.resize(static_cast<int>(view_ids.size()), feature_dim);
    for (std::size_t j = 0; j < view_ids.size(); ++j) {
        const int v = view_ids[j];
        out.view[j] = v;
        const Camera& cam = cameras[v];
        const auto proj = project_point(cam, point);
        if (!proj || !cam.contains(proj->pixel)) continue;
        const TensorBuffer<T>& img = images[v];
        const BilinearTaps taps = bilinear_taps(img.height(), img.width(), proj->pixel);
        out.taps[j] = taps;
        out.valid[j] = 1;
        gather_taps(img, taps, out.color.data() + 3 * j);
        if (!feature_maps.empty()) gather_taps(feature_maps[v], taps, out.feature.data() + j * feature_dim);
        const Vec3 dir = (point - cam.center()).normalized();
        out.cosine[j] = T(std::clamp(ray.direction.dot(dir), -1.0, 1.0));
    }
}

template <typename T>
ViewBundle<T> gather_bundle(const Vec3& point, const Ray& ray, const MultiViewFrame& frame,
                            std::span<const int> view_ids, std::span<const TensorBuffer<T>> feature_maps) {
    std::vector<TensorBuffer<T>> images;
    images.reserve(frame.view_count());
    for (const auto& img : frame.images()) images.push_back(img.template cast<T>());
    const int f = feature_maps.empty() ? 0 : static_cast<int>(feature_maps.front().channels());
    ViewBundle<T> out;
    gather_bundle_into<T>(point, ray, frame.cameras(), images, feature_maps, view_ids, f, out);
    return out;
}

/// Per-view network inputs: row j = [f_j, cos_j, v_j, u] with v_j = (f_j - u)^2.
template <typename T>
struct AggregatedFeatures {
    int k = 0;
    int feature_dim = 0;
    std::vector<T> mean;            ///< u, F
    std::vector<T> variance;        ///< v_j, k x F
    RowMatrix<T> rows;              ///< k x (3F + 1); zero rows for invalid views
    std::vector<std::uint8_t> valid;
};

/// Writes the k aggregated rows for one bundle into `rows` (k x (3F+1), row-major).
/// Throws NoVisibility when no view is valid.
template <typename T>
void aggregate_into(const ViewBundle<T>& b, T* rows, T* mean_out = nullptr) {
    const int f = b.feature_dim;
    const int width = blend_input_width(f);
    std::size_t n = 0;
    T mean_buf[64];
    T* u = mean_out ? mean_out : mean_buf;
    if (!mean_out && f > 64) throw Error(ErrorKind::ShapeError, "feature dim too large");
    T col[64];
    if (b.k > 64) throw Error(ErrorKind::ShapeError, "too many source views");
    for (int j = 0; j < b.k; ++j) n += b.valid[j] ? 1 : 0;
    if (n == 0) throw Error(ErrorKind::NoVisibility, "no valid source view");
    for (int c = 0; c < f; ++c) {
        std::size_t m = 0;
        for (int j = 0; j < b.k; ++j)
            if (b.valid[j]) col[m++] = b.feature[j * f + c];
        u[c] = order_free_sum(col, m) / T(n);
    }
    for (int j = 0; j < b.k; ++j) {
        T* row = rows + static_cast<std::size_t>(j) * width;
        if (!b.valid[j]) {
            std::fill(row, row + width, T(0));
            continue;
        }
        for (int c = 0; c < f; ++c) {
            const T x = b.feature[j * f + c];
            row[c] = x;
            row[f + 1 + c] = (x - u[c]) * (x - u[c]);
            row[2 * f + 1 + c] = u[c];
        }
        row[f] = b.cosine[j];
    }
}

template <typename T>
AggregatedFeatures<T> aggregate(const ViewBundle<T>& b) {
    AggregatedFeatures<T> out;
    out.k = b.k;
    out.feature_dim = b.feature_dim;
    out.valid = b.valid;
    out.mean.assign(b.feature_dim, T(0));
    out.rows = RowMatrix<T>::Zero(b.k, blend_input_width(b.feature_dim));
    aggregate_into(b, out.rows.data(), out.mean.data());
    out.variance.assign(static_cast<std::size_t>(b.k) * b.feature_dim, T(0));
    for (int j = 0; j < b.k; ++j)
        for (int c = 0; c < b.feature_dim; ++c) out.variance[j * b.feature_dim + c] = out.rows(j, b.feature_dim + 1 + c);
    return out;
}

/// Backward of aggregate_into: row gradients (k x (3F+1)) -> feature gradients (k x F).
/// The cosine input carries no trainable dependency and is dropped.
template <typename T>
void aggregate_backward(const std::uint8_t* valid, int k, int f, const T* rows, const T* row_grads,
                        T* feature_grads) {
    const int width = blend_input_width(f);
    std::size_t n = 0;
    for (int j = 0; j < k; ++j) n += valid[j] ? 1 : 0;
    std::fill(feature_grads, feature_grads + static_cast<std::size_t>(k) * f, T(0));
    if (n == 0) return;
    const T inv_n = T(1) / T(n);
    for (int c = 0; c < f; ++c) {
        // every row depends on u
        T shared = T(0);
        for (int j = 0; j < k; ++j) {
            if (!valid[j]) continue;
            const T* row = rows + static_cast<std::size_t>(j) * width;
            const T* g = row_grads + static_cast<std::size_t>(j) * width;
            const T dev = row[c] - row[2 * f + 1 + c];
            shared += g[2 * f + 1 + c] - T(2) * dev * g[f + 1 + c];
        }
        for (int j = 0; j < k; ++j) {
            if (!valid[j]) continue;
            const T* row = rows + static_cast<std::size_t>(j) * width;
            const T* g = row_grads + static_cast<std::size_t>(j) * width;
            const T dev = row[c] - row[2 * f + 1 + c];
            feature_grads[j * f + c] = g[c] + T(2) * dev * g[f + 1 + c] + inv_n * shared;
        }
    }
}

/// Softmax over per-view logits with invisible views masked out.
/// Rows go through the branch one at a time so every view takes the same
/// arithmetic path and permuting views permutes the weights exactly.
template <typename T>
std::vector<T> blend_weights(const AggregatedFeatures<T>& agg, const MlpParams<T>& params) {
    std::vector<T> logits(agg.k, T(0));
    for (int j = 0; j < agg.k; ++j) {
        if (!agg.valid[j]) continue;
        const RowMatrix<T> row = agg.rows.row(j);
        logits[j] = mlp_forward(params, row)(0, 0);
    }
    std::vector<T> w(agg.k);
    masked_softmax(logits.data(), agg.valid.data(), static_cast<std::size_t>(agg.k), w.data());
    return w;
}

/// Equal weights over valid views.
template <typename T>
std::vector<T> uniform_weights(const ViewBundle<T>& b) {
    const std::size_t n = b.valid_count();
    if (n == 0) throw Error(ErrorKind::NoVisibility, "no valid source view");
    std::vector<T> w(b.k, T(0));
    for (int j = 0; j < b.k; ++j)
        if (b.valid[j]) w[j] = T(1) / T(n);
    return w;
}

/// c = sum_j w_j * color_j.
template <typename T>
std::array<T, 3> blend_color(std::span<const T> weights, const ViewBundle<T>& b) {
    std::array<T, 3> c{T(0), T(0), T(0)};
    for (int j = 0; j < b.k; ++j)
        for (int ch = 0; ch < 3; ++ch) c[ch] += weights[j] * b.color[3 * j + ch];
    return c;
}

/// Feature encoder plus blending branch.
template <typename T>
struct BlendNetwork {
    int feature_dim = kDefaultFeatureDim;
    int k = kDefaultSourceViews;
    EncoderParams<T> encoder;
    MlpParams<T> mlp;

    BlendNetwork() = default;
    BlendNetwork(int features, int views)
        : feature_dim(features), k(views), encoder(features), mlp(blend_mlp_sizes(features)) {}

    void init(std::uint64_t seed) {
        encoder.init_he_uniform(seed);
        mlp.init_he_uniform(seed ^ 0x9e3779b97f4a7c15ULL);
    }

    template <typename U>
    BlendNetwork<U> cast() const {
        BlendNetwork<U> out;
        out.feature_dim = feature_dim;
        out.k = k;
        out.encoder = encoder.template cast<U>();
        out.mlp = mlp.template cast<U>();
        return out;
    }
};

} // namespace nevrf
