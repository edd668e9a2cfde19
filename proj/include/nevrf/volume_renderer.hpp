// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nevrf/density_grid.hpp"
#include "nevrf/neural_core.hpp"
#include "nevrf/radiance_blending.hpp"
#include "nevrf/scene_model.hpp"

namespace nevrf {

struct RayMarchConfig {
    int n_s = 128;
    Vec3 background = Vec3::Zero();
    bool jitter = false;
    /// Marching stops once transmittance falls below this.
    double early_stop = 1e-4;
    /// Samples contributing less than this (T * alpha) take the background
    /// color instead of a blended one. 0 evaluates every sample.
    double min_weight = 0.0;
    double density_shift = kDefaultDensityShift;
};

/// Sample positions along [ray.near, ray.far]: segment midpoints, or one
/// uniform draw per segment when `rng` is given.
struct RaySamples {
    std::vector<double> t;
    double step = 0.0;
};

RaySamples sample_points(const Ray& ray, int n_s, std::mt19937_64* rng = nullptr);

template <typename T>
struct CompositeResult {
    std::array<T, 3> color{};
    std::vector<T> weights;  ///< T_i * alpha_i
    std::vector<T> transmittance; ///< T_i before sample i
    T opacity = T(0);
    T residual = T(1);       ///< transmittance after the last sample
};

/// Front-to-back alpha compositing over a background.
template <typename T>
CompositeResult<T> composite(std::span<const T> alphas, std::span<const std::array<T, 3>> colors,
                             const std::array<T, 3>& background) {
    if (alphas.size() != colors.size()) throw Error(ErrorKind::ShapeError, "alpha/color count mismatch");
    CompositeResult<T> r;
    r.weights.resize(alphas.size());
    r.transmittance.resize(alphas.size());
    double trans = 1.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        r.transmittance[i] = T(trans);
        r.weights[i] = T(trans * static_cast<double>(alphas[i]));
        for (int c = 0; c < 3; ++c) r.color[c] += r.weights[i] * colors[i][c];
        trans *= 1.0 - static_cast<double>(alphas[i]);
    }
    r.residual = T(trans);
    r.opacity = T(1.0 - trans);
    for (int c = 0; c < 3; ++c) r.color[c] += r.residual * background[c];
    return r;
}

/// 10 log10(1 / MSE); identical images report 99 dB.
double psnr(const Image& image, const Image& reference);
double mse_to_psnr(double mse);
inline constexpr double kPsnrSentinel = 99.0;

/// How per-point colors are produced.
struct BlendSettings {
    int k = kDefaultSourceViews;
    BlendMode mode = BlendMode::Network;
    /// Select views once at the ray midpoint instead of per point.
    bool per_ray_selection = false;
};

/// Everything a ray batch reads. Spans must outlive the call.
template <typename T>
struct RenderInputs {
    const BasicDensityGrid<T>* grid = nullptr;
    std::span<const Camera> cameras;
    std::span<const TensorBuffer<T>> images;
    std::span<const TensorBuffer<T>> features; ///< required in Network mode
    std::span<const int> candidates;           ///< eligible source views
    const MlpParams<T>* mlp = nullptr;         ///< required in Network mode
    BlendSettings blend;
    int feature_dim = kDefaultFeatureDim;
};

struct RayRequest {
    Ray ray;
    int exclude_view = -1; ///< source view never used for this ray (-1: none)
};

/// Intermediate values of a batch render, sufficient for the backward pass.
template <typename T>
struct RenderTape {
    // per ray
    std::vector<std::size_t> ray_begin; ///< sample offsets, rays + 1 entries
    std::vector<T> step;
    std::vector<std::array<T, 3>> pixel;
    // per sample
    std::vector<T> raw;
    std::vector<T> alpha;
    std::vector<T> trans;
    std::vector<TrilinearWeights> tri;
    std::vector<std::array<T, 3>> color;
    std::vector<int> active; ///< index into the active list, -1 when the background color was used
    // per active sample (k entries each)
    std::vector<std::size_t> active_sample;
    std::vector<int> view;
    std::vector<std::uint8_t> valid;
    std::vector<T> source_color; ///< k x 3
    std::vector<BilinearTaps> taps;
    std::vector<T> weight;       ///< blend weights, k
    RowMatrix<T> rows;           ///< (active * k) x (3F + 1)
    MlpTape<T> mlp_tape;
    int k = 0;
    int feature_dim = 0;
    BlendMode mode = BlendMode::Network;

    std::size_t ray_count() const { return ray_begin.empty() ? 0 : ray_begin.size() - 1; }
};

/// Gradient sinks; empty vectors are skipped.
template <typename T>
struct RenderGrads {
    std::vector<T> grid;
    std::vector<T> mlp;
    std::vector<TensorBuffer<T>> features;
};

/// Renders a batch of rays. Rays are clipped to the grid box; rays that miss it
/// return the background.
template <typename T>
std::vector<std::array<T, 3>> render_rays(const RenderInputs<T>& in, std::span<const RayRequest> rays,
                                          const RayMarchConfig& cfg, RenderTape<T>& tape,
                                          std::mt19937_64* jitter_rng = nullptr);

/// Backpropagates dL/dpixel through a recorded batch.
template <typename T>
void render_rays_backward(const RenderInputs<T>& in, const RenderTape<T>& tape,
                          std::span<const std::array<T, 3>> pixel_grads, const RayMarchConfig& cfg,
                          RenderGrads<T>& grads);

/// Images and feature maps of one frame in the working precision.
template <typename T>
struct FrameSources {
    std::vector<Camera> cameras;
    std::vector<TensorBuffer<T>> images;
    std::vector<TensorBuffer<T>> features;
    std::vector<EncoderTape<T>> encoder_tapes;
    std::vector<int> candidates;
};

/// Casts the frame's images and, when `encoder` is set, encodes every view.
template <typename T>
FrameSources<T> prepare_sources(const MultiViewFrame& frame, const EncoderParams<T>* encoder,
                                std::vector<int> candidates, bool keep_tapes = false) {
    FrameSources<T> s;
    s.cameras = frame.cameras();
    s.candidates = std::move(candidates);
    s.images.reserve(frame.view_count());
    for (const auto& img : frame.images()) s.images.push_back(img.template cast<T>());
    if (encoder) {
        s.features.resize(frame.view_count());
        if (keep_tapes) s.encoder_tapes.resize(frame.view_count());
        for (std::size_t v = 0; v < frame.view_count(); ++v) {
            s.features[v] = encode_features(*encoder, s.images[v], keep_tapes ? &s.encoder_tapes[v] : nullptr);
        }
    }
    return s;
}

template <typename T>
RenderInputs<T> make_inputs(const FrameSources<T>& src, const BasicDensityGrid<T>& grid, const MlpParams<T>* mlp,
                            BlendSettings blend, int feature_dim) {
    RenderInputs<T> in;
    in.grid = &grid;
    in.cameras = src.cameras;
    in.images = src.images;
    in.features = src.features;
    in.candidates = src.candidates;
    in.mlp = mlp;
    in.blend = blend;
    in.feature_dim = feature_dim;
    return in;
}

/// One pixel through the full chain.
template <typename T>
std::array<T, 3> render_pixel(const RenderInputs<T>& in, const Camera& camera, const Vec2& pixel,
                              const RayMarchConfig& cfg, int exclude_view = -1) {
    RenderTape<T> tape;
    const RayRequest req{generate_ray(camera, pixel), exclude_view};
    return render_rays<T>(in, std::span<const RayRequest>(&req, 1), cfg, tape).front();
}

/// Renders every pixel center of `camera`. Rows are split into tiles rendered
/// by up to `threads` workers; the output does not depend on the thread count.
Image render_image(const RenderInputs<float>& in, const Camera& camera, const RayMarchConfig& cfg,
                   int threads = 0);

} // namespace nevrf
