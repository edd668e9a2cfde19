// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/volume_renderer.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace nevrf {

RaySamples sample_points(const Ray& ray, int n_s, std::mt19937_64* rng) {
    if (n_s < 2) throw Error(ErrorKind::InvalidArgument, "n_s must be >= 2");
    if (!(ray.near < ray.far) || !std::isfinite(ray.far)) {
        throw Error(ErrorKind::InvalidArgument, "sampling needs a finite near < far");
    }
    RaySamples s;
    s.step = (ray.far - ray.near) / n_s;
    s.t.resize(n_s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n_s; ++i) {
        const double offset = rng ? unit(*rng) : 0.5;
        s.t[i] = ray.near + (i + offset) * s.step;
    }
    return s;
}

double mse_to_psnr(double mse) {
    if (mse <= 0.0) return kPsnrSentinel;
    return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& image, const Image& reference) {
    if (image.shape() != reference.shape()) throw Error(ErrorKind::ShapeError, "psnr shape mismatch");
    if (image.size() == 0) throw Error(ErrorKind::ShapeError, "psnr of empty image");
    double sum = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double d = static_cast<double>(image[i]) - static_cast<double>(reference[i]);
        sum += d * d;
    }
    return mse_to_psnr(sum / static_cast<double>(image.size()));
}

namespace {

// Trilinear weights with the index coordinate clamped into the grid, so that
// points on the clipped segment never fall out through rounding.
template <typename T>
TrilinearWeights clamped_weights(const BasicDensityGrid<T>& grid, const Vec3& inv_voxel, const Vec3& x) {
    Vec3 u = (x - grid.bbox().min).cwiseProduct(inv_voxel);
    for (int axis = 0; axis < 3; ++axis) u[axis] = std::clamp(u[axis], 0.0, double(grid.dims()[axis] - 1));
    return *trilinear_weights_index(grid.dims(), u);
}

} // namespace

template <typename T>
std::vector<std::array<T, 3>> render_rays(const RenderInputs<T>& in, std::span<const RayRequest> rays,
                                          const RayMarchConfig& cfg, RenderTape<T>& tape,
                                          std::mt19937_64* jitter_rng) {
    if (!in.grid) throw Error(ErrorKind::InvalidArgument, "render needs a density grid");
    const bool network = in.blend.mode == BlendMode::Network;
    if (network && (!in.mlp || in.features.size() != in.cameras.size())) {
        throw Error(ErrorKind::InvalidArgument, "network blending needs an MLP and per-view feature maps");
    }
    if (in.images.size() != in.cameras.size()) throw Error(ErrorKind::ShapeError, "one image per camera required");
    const auto& grid = *in.grid;
    const auto values = grid.values();
    const Vec3 inv_voxel = grid.voxel_size().cwiseInverse();
    const T shift = T(cfg.density_shift);
    const std::array<T, 3> bg{T(cfg.background.x()), T(cfg.background.y()), T(cfg.background.z())};
    const int k = in.blend.k;
    if (k < 1 || k > 64) throw Error(ErrorKind::InvalidArgument, "k must be in [1, 64]");
    const int f = network ? in.feature_dim : 0;
    const int width = blend_input_width(f);

    tape = RenderTape<T>{};
    tape.k = k;
    tape.feature_dim = f;
    tape.mode = in.blend.mode;
    tape.ray_begin.reserve(rays.size() + 1);
    tape.step.assign(rays.size(), T(0));
    std::vector<std::pair<double, double>> segment(rays.size(), {0.0, 0.0});
    std::vector<std::vector<double>> sample_t(rays.size());

    // Pass 1: densities, transmittance, and which samples need a blended color.
    std::size_t active_count = 0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        tape.ray_begin.push_back(tape.raw.size());
        const Ray& ray = rays[r].ray;
        const auto hit = grid.bbox().intersect(ray);
        if (!hit) continue;
        segment[r] = *hit;
        Ray clipped = ray;
        clipped.near = hit->first;
        clipped.far = hit->second;
        RaySamples s = sample_points(clipped, cfg.n_s, cfg.jitter ? jitter_rng : nullptr);
        const T step = T(s.step);
        tape.step[r] = step;
        double trans = 1.0; // double so long float marches still telescope to 1
        std::size_t used = 0;
        for (double t : s.t) {
            const TrilinearWeights w = clamped_weights(grid, inv_voxel, ray.at(t));
            T raw = T(0);
            for (int c = 0; c < 8; ++c) raw += T(w.weight[c]) * values[w.index[c]];
            const T alpha = raw_to_alpha(raw, step, shift);
            tape.raw.push_back(raw);
            tape.alpha.push_back(alpha);
            tape.trans.push_back(T(trans));
            tape.tri.push_back(w);
            const bool needs_color = trans * static_cast<double>(alpha) >= cfg.min_weight;
            tape.active.push_back(needs_color ? static_cast<int>(active_count) : -1);
            if (needs_color) ++active_count;
            ++used;
            trans *= 1.0 - static_cast<double>(alpha);
            if (trans < cfg.early_stop) break;
        }
        s.t.resize(used);
        sample_t[r] = std::move(s.t);
    }
    tape.ray_begin.push_back(tape.raw.size());
    const std::size_t sample_count = tape.raw.size();
    tape.color.assign(sample_count, bg);

    // Pass 2: view selection and gathering for active samples.
    tape.active_sample.resize(active_count);
    tape.view.assign(active_count * k, -1);
    tape.valid.assign(active_count * k, 0);
    tape.source_color.assign(active_count * k * 3, T(0));
    tape.taps.assign(active_count * k, BilinearTaps{});
    tape.weight.assign(active_count * k, T(0));
    if (network) tape.rows = RowMatrix<T>::Zero(static_cast<Eigen::Index>(active_count * k), width);
    ViewBundle<T> bundle;
    std::vector<int> ray_views;
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const Ray& ray = rays[r].ray;
        const std::optional<int> exclude =
            rays[r].exclude_view >= 0 ? std::optional<int>(rays[r].exclude_view) : std::nullopt;
        bool ray_selected = false;
        for (std::size_t i = tape.ray_begin[r]; i < tape.ray_begin[r + 1]; ++i) {
            const int a = tape.active[i];
            if (a < 0) continue;
            tape.active_sample[a] = i;
            const Vec3 x = ray.at(sample_t[r][i - tape.ray_begin[r]]);
            std::vector<int> views;
            if (in.blend.per_ray_selection) {
                if (!ray_selected) {
                    ray_views = select_views(ray.at(0.5 * (segment[r].first + segment[r].second)), ray, in.cameras,
                                             in.candidates, k, exclude);
                    ray_selected = true;
                }
                views = ray_views;
            } else {
                views = select_views(x, ray, in.cameras, in.candidates, k, exclude);
            }
            gather_bundle_into<T>(x, ray, in.cameras, in.images,
                                  network ? in.features : std::span<const TensorBuffer<T>>{}, views, f, bundle);
            const std::size_t base = static_cast<std::size_t>(a) * k;
            for (int j = 0; j < k; ++j) {
                tape.view[base + j] = bundle.view[j];
                tape.valid[base + j] = bundle.valid[j];
                tape.taps[base + j] = bundle.taps[j];
                for (int c = 0; c < 3; ++c) tape.source_color[(base + j) * 3 + c] = bundle.color[3 * j + c];
            }
            if (network && bundle.valid_count() > 0) aggregate_into(bundle, tape.rows.data() + base * width);
        }
    }

    // Pass 3: blend weights.
    RowMatrix<T> logits;
    if (network && active_count > 0) logits = mlp_forward(*in.mlp, tape.rows, &tape.mlp_tape);
    for (std::size_t a = 0; a < active_count; ++a) {
        const std::size_t base = a * k;
        const std::uint8_t* valid = tape.valid.data() + base;
        std::size_t n = 0;
        for (int j = 0; j < k; ++j) n += valid[j] ? 1 : 0;
        if (n == 0) continue; // no visibility: background color, alpha unchanged
        T* w = tape.weight.data() + base;
        if (network) {
            masked_softmax(logits.data() + base, valid, static_cast<std::size_t>(k), w);
        } else {
            for (int j = 0; j < k; ++j) w[j] = valid[j] ? T(1) / T(n) : T(0);
        }
        std::array<T, 3> c{T(0), T(0), T(0)};
        for (int j = 0; j < k; ++j)
            for (int ch = 0; ch < 3; ++ch) c[ch] += w[j] * tape.source_color[(base + j) * 3 + ch];
        tape.color[tape.active_sample[a]] = c;
    }

    // Pass 4: compositing.
    tape.pixel.assign(rays.size(), bg);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const std::size_t b = tape.ray_begin[r];
        const std::size_t e = tape.ray_begin[r + 1];
        if (b == e) continue;
        std::array<T, 3> px{T(0), T(0), T(0)};
        T trans = T(1);
        for (std::size_t i = b; i < e; ++i) {
            const T wgt = tape.trans[i] * tape.alpha[i];
            for (int c = 0; c < 3; ++c) px[c] += wgt * tape.color[i][c];
            trans = tape.trans[i] * (T(1) - tape.alpha[i]);
        }
        for (int c = 0; c < 3; ++c) px[c] += trans * bg[c];
        tape.pixel[r] = px;
    }
    return tape.pixel;
}

template <typename T>
void render_rays_backward(const RenderInputs<T>& in, const RenderTape<T>& tape,
                          std::span<const std::array<T, 3>> pixel_grads, const RayMarchConfig& cfg,
                          RenderGrads<T>& grads) {
    if (pixel_grads.size() != tape.ray_count()) throw Error(ErrorKind::ShapeError, "pixel gradient count mismatch");
    const bool want_grid = !grads.grid.empty();
    const bool want_mlp = !grads.mlp.empty();
    const bool want_features = !grads.features.empty();
    if (want_grid && grads.grid.size() != in.grid->size()) throw Error(ErrorKind::ShapeError, "grid gradient size");
    const T shift = T(cfg.density_shift);
    const std::array<T, 3> bg{T(cfg.background.x()), T(cfg.background.y()), T(cfg.background.z())};
    const int k = tape.k;
    const std::size_t active_count = tape.active_sample.size();
    std::vector<std::array<T, 3>> dcolor(active_count, {T(0), T(0), T(0)});

    for (std::size_t r = 0; r < tape.ray_count(); ++r) {
        const std::size_t b = tape.ray_begin[r];
        const std::size_t e = tape.ray_begin[r + 1];
        const auto& g = pixel_grads[r];
        std::array<T, 3> suffix = bg;
        for (std::size_t i = e; i-- > b;) {
            const auto& c = tape.color[i];
            const T alpha = tape.alpha[i];
            T dalpha = T(0);
            for (int ch = 0; ch < 3; ++ch) dalpha += g[ch] * (c[ch] - suffix[ch]);
            dalpha *= tape.trans[i];
            for (int ch = 0; ch < 3; ++ch) suffix[ch] = alpha * c[ch] + (T(1) - alpha) * suffix[ch];
            if (want_grid) {
                const T draw = dalpha * raw_to_alpha_grad(tape.raw[i], tape.step[r], shift);
                const auto& w = tape.tri[i];
                for (int cn = 0; cn < 8; ++cn) grads.grid[w.index[cn]] += draw * T(w.weight[cn]);
            }
            const int a = tape.active[i];
            if (a >= 0) {
                const T wgt = tape.trans[i] * alpha;
                for (int ch = 0; ch < 3; ++ch) dcolor[a][ch] = g[ch] * wgt;
            }
        }
    }

    if (tape.mode != BlendMode::Network || active_count == 0 || (!want_mlp && !want_features)) return;
    const int f = tape.feature_dim;
    const int width = blend_input_width(f);
    RowMatrix<T> dlogits = RowMatrix<T>::Zero(static_cast<Eigen::Index>(active_count * k), 1);
    for (std::size_t a = 0; a < active_count; ++a) {
        const std::size_t base = a * k;
        const T* w = tape.weight.data() + base;
        T dw[64];
        T s = T(0);
        for (int j = 0; j < k; ++j) {
            dw[j] = T(0);
            if (!tape.valid[base + j]) continue;
            for (int ch = 0; ch < 3; ++ch) dw[j] += dcolor[a][ch] * tape.source_color[(base + j) * 3 + ch];
            s += w[j] * dw[j];
        }
        for (int j = 0; j < k; ++j)
            if (tape.valid[base + j]) dlogits(static_cast<Eigen::Index>(base + j), 0) = w[j] * (dw[j] - s);
    }
    std::vector<T> scratch;
    std::span<T> mlp_sink;
    if (want_mlp) {
        mlp_sink = grads.mlp;
    } else {
        scratch.assign(in.mlp->parameter_count(), T(0));
        mlp_sink = scratch;
    }
    const RowMatrix<T> drows = mlp_backward(*in.mlp, tape.mlp_tape, dlogits, mlp_sink);
    if (!want_features) return;
    std::vector<T> dfeat(static_cast<std::size_t>(k) * f);
    for (std::size_t a = 0; a < active_count; ++a) {
        const std::size_t base = a * k;
        aggregate_backward(tape.valid.data() + base, k, f, tape.rows.data() + base * width,
                           drows.data() + base * width, dfeat.data());
        for (int j = 0; j < k; ++j) {
            if (!tape.valid[base + j]) continue;
            scatter_taps(grads.features[tape.view[base + j]], tape.taps[base + j], dfeat.data() + j * f);
        }
    }
}

template std::vector<std::array<float, 3>> render_rays<float>(const RenderInputs<float>&, std::span<const RayRequest>,
                                                              const RayMarchConfig&, RenderTape<float>&,
                                                              std::mt19937_64*);
template std::vector<std::array<double, 3>> render_rays<double>(const RenderInputs<double>&,
                                                                std::span<const RayRequest>, const RayMarchConfig&,
                                                                RenderTape<double>&, std::mt19937_64*);
template void render_rays_backward<float>(const RenderInputs<float>&, const RenderTape<float>&,
                                          std::span<const std::array<float, 3>>, const RayMarchConfig&,
                                          RenderGrads<float>&);
template void render_rays_backward<double>(const RenderInputs<double>&, const RenderTape<double>&,
                                           std::span<const std::array<double, 3>>, const RayMarchConfig&,
                                           RenderGrads<double>&);

Image render_image(const RenderInputs<float>& in, const Camera& camera, const RayMarchConfig& cfg, int threads) {
    const int h = camera.height();
    const int w = camera.width();
    Image out = Image::image(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3);
    constexpr int kTileRows = 4;
    const int tiles = (h + kTileRows - 1) / kTileRows;
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        RenderTape<float> tape;
        std::vector<RayRequest> batch;
        for (int tile = next++; tile < tiles; tile = next++) {
            const int y0 = tile * kTileRows;
            const int y1 = std::min(h, y0 + kTileRows);
            batch.clear();
            for (int y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x) batch.push_back({generate_ray(camera, Vec2(x + 0.5, y + 0.5)), -1});
            try {
                const auto px = render_rays<float>(in, batch, cfg, tape);
                for (std::size_t i = 0; i < px.size(); ++i) {
                    const std::size_t y = static_cast<std::size_t>(y0) + i / w;
                    const std::size_t x = i % w;
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = px[i][c];
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = tiles;
            }
        }
    };
    int n = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n = std::min(n, tiles);
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

} // namespace nevrf
