// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nevrf/error.hpp"
#include "nevrf/scene_model.hpp"
#include "nevrf/tensor.hpp"

namespace nevrf {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMatrix<T>>;

/// Named slice of a flat parameter vector, used for checkpoints.
struct ParameterBlock {
    std::string name;
    std::size_t offset;
    std::size_t size;
};

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

/// Fully connected network: ReLU on hidden layers, identity on the output.
/// Parameters live in one flat vector, per layer W (out x in, row-major) then b.
template <typename T>
class MlpParams {
public:
    MlpParams() = default;

    explicit MlpParams(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
        if (sizes_.size() < 2) throw Error(ErrorKind::ShapeError, "an MLP needs at least two layer sizes");
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw Error(ErrorKind::ShapeError, "layer size must be >= 1");
            const std::size_t w = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
            blocks_.push_back({"mlp.l" + std::to_string(l) + ".weight", offset, w});
            offset += w;
            blocks_.push_back({"mlp.l" + std::to_string(l) + ".bias", offset, static_cast<std::size_t>(sizes_[l + 1])});
            offset += static_cast<std::size_t>(sizes_[l + 1]);
        }
        values_.assign(offset, T(0));
    }

    /// He-uniform hidden layers; the output layer is scaled by `output_scale`. Biases start at zero.
    void init_he_uniform(std::uint64_t seed, double output_scale = 0.1) {
        std::mt19937_64 rng(seed);
        for (std::size_t l = 0; l < layer_count(); ++l) {
            const double bound = std::sqrt(6.0 / sizes_[l]) * (l + 1 == layer_count() ? output_scale : 1.0);
            std::uniform_real_distribution<double> dist(-bound, bound);
            auto w = weight(l);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = T(dist(rng));
            bias(l).setZero();
        }
        ++generation_;
    }

    std::size_t layer_count() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    const std::vector<int>& sizes() const noexcept { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::size_t parameter_count() const noexcept { return values_.size(); }
    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }

    RowMap<T> weight(std::size_t l) {
        return RowMap<T>(values_.data() + blocks_[2 * l].offset, sizes_[l + 1], sizes_[l]);
    }
    ConstRowMap<T> weight(std::size_t l) const {
        return ConstRowMap<T>(values_.data() + blocks_[2 * l].offset, sizes_[l + 1], sizes_[l]);
    }
    Eigen::Map<ColVector<T>> bias(std::size_t l) {
        return Eigen::Map<ColVector<T>>(values_.data() + blocks_[2 * l + 1].offset, sizes_[l + 1]);
    }
    Eigen::Map<const ColVector<T>> bias(std::size_t l) const {
        return Eigen::Map<const ColVector<T>>(values_.data() + blocks_[2 * l + 1].offset, sizes_[l + 1]);
    }

    std::span<const T> values() const noexcept { return values_; }
    /// Mutable access invalidates outstanding tapes.
    std::span<T> mutable_values() noexcept {
        ++generation_;
        return values_;
    }
    std::uint64_t generation() const noexcept { return generation_; }

    template <typename U>
    MlpParams<U> cast() const {
        MlpParams<U> out(sizes_);
        auto dst = out.mutable_values();
        std::copy(values_.begin(), values_.end(), dst.begin());
        return out;
    }

private:
    std::vector<int> sizes_;
    std::vector<ParameterBlock> blocks_;
    std::vector<T> values_;
    std::uint64_t generation_ = 0;
};

/// Activations recorded by a batched forward pass.
template <typename T>
struct MlpTape {
    std::vector<RowMatrix<T>> layer_inputs; ///< input to layer l (post-ReLU for l > 0)
    const void* owner = nullptr;
    std::uint64_t generation = 0;
};

/// Batched forward over the rows of `input` (N x in). Returns N x out.
template <typename T>
RowMatrix<T> mlp_forward(const MlpParams<T>& params, const RowMatrix<T>& input, MlpTape<T>* tape = nullptr) {
    if (input.cols() != params.input_size()) throw Error(ErrorKind::ShapeError, "MLP input width mismatch");
    RowMatrix<T> act = input;
    if (tape) {
        tape->layer_inputs.clear();
        tape->owner = &params;
        tape->generation = params.generation();
    }
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        // copies keep Eigen's kernels independent of where the vector storage happens to sit
        const RowMatrix<T> w = params.weight(l);
        RowMatrix<T> z(act.rows(), params.sizes()[l + 1]);
        z.noalias() = act * w.transpose();
        z.rowwise() += params.bias(l).transpose();
        if (l + 1 < params.layer_count()) z = z.cwiseMax(T(0));
        if (tape) {
            tape->layer_inputs.push_back(std::move(act));
        }
        act = std::move(z);
    }
    return act;
}

/// Single-vector convenience wrapper.
template <typename T>
std::vector<T> mlp_forward(const MlpParams<T>& params, std::span<const T> input, MlpTape<T>* tape = nullptr) {
    RowMatrix<T> x(1, static_cast<Eigen::Index>(input.size()));
    for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
    RowMatrix<T> y = mlp_forward(params, x, tape);
    return std::vector<T>(y.data(), y.data() + y.size());
}

/// Reverse pass. Accumulates parameter gradients into `param_grads` (flat, same
/// layout as the params) and returns the input gradient (N x in).
template <typename T>
RowMatrix<T> mlp_backward(const MlpParams<T>& params, const MlpTape<T>& tape, const RowMatrix<T>& output_grad,
                          std::span<T> param_grads) {
    if (tape.owner != &params || tape.generation != params.generation() ||
        tape.layer_inputs.size() != params.layer_count()) {
        throw Error(ErrorKind::TapeError, "tape does not belong to the current parameters");
    }
    if (param_grads.size() != params.parameter_count()) {
        throw Error(ErrorKind::ShapeError, "parameter gradient buffer size mismatch");
    }
    if (output_grad.cols() != params.output_size() || output_grad.rows() != tape.layer_inputs.front().rows()) {
        throw Error(ErrorKind::ShapeError, "output gradient shape mismatch");
    }
    const auto& blocks = params.blocks();
    RowMatrix<T> g = output_grad;
    for (std::size_t l = params.layer_count(); l-- > 0;) {
        const RowMatrix<T>& a = tape.layer_inputs[l];
        RowMap<T> dw(param_grads.data() + blocks[2 * l].offset, params.sizes()[l + 1], params.sizes()[l]);
        Eigen::Map<ColVector<T>> db(param_grads.data() + blocks[2 * l + 1].offset, params.sizes()[l + 1]);
        const RowMatrix<T> dwl = g.transpose() * a;
        const ColVector<T> dbl = g.colwise().sum().transpose();
        dw += dwl;
        db += dbl;
        const RowMatrix<T> w = params.weight(l);
        RowMatrix<T> next = g * w;
        if (l > 0) next = next.cwiseProduct((a.array() > T(0)).matrix().template cast<T>());
        g = std::move(next);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Numerically stable softmax (max subtraction).
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw Error(ErrorKind::ShapeError, "softmax of empty vector");
    using std::exp;
    const T m = *std::max_element(logits.begin(), logits.end());
    std::vector<T> out(logits.size());
    T sum = T(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = exp(logits[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

/// Sum of n values (stride apart) that does not depend on their order, so view
/// permutations reproduce weights bit for bit.
template <typename T>
T order_free_sum(const T* v, std::size_t n, std::size_t stride = 1) {
    constexpr std::size_t kInline = 32;
    T buf[kInline];
    std::vector<T> heap;
    T* dst = buf;
    if (n > kInline) {
        heap.resize(n);
        dst = heap.data();
    }
    for (std::size_t i = 0; i < n; ++i) dst[i] = v[i * stride];
    std::sort(dst, dst + n);
    T sum = T(0);
    for (std::size_t i = 0; i < n; ++i) sum += dst[i];
    return sum;
}

/// Softmax over entries with mask[i] set; masked-out entries get exactly 0.
/// Throws NoVisibility when nothing is valid.
template <typename T>
void masked_softmax(const T* logits, const std::uint8_t* mask, std::size_t k, T* out) {
    using std::exp;
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < k; ++i)
        if (mask[i]) m = std::max(m, logits[i]);
    if (m == -std::numeric_limits<T>::infinity()) throw Error(ErrorKind::NoVisibility, "no valid views");
    for (std::size_t i = 0; i < k; ++i) out[i] = mask[i] ? exp(logits[i] - m) : T(0);
    const T sum = order_free_sum(out, k);
    for (std::size_t i = 0; i < k; ++i) out[i] /= sum;
}

// ---------------------------------------------------------------------------
// Convolutional feature encoder
// ---------------------------------------------------------------------------

inline constexpr int kEncoderHidden = 16;

/// Two 3x3 same-padded convolutions (3 -> 16 -> F) with ReLU between.
/// Kernel layout per output channel: (ky, kx, cin), cin fastest.
template <typename T>
class EncoderParams {
public:
    EncoderParams() = default;

    explicit EncoderParams(int feature_dim) : feature_dim_(feature_dim) {
        if (feature_dim_ < 2) throw Error(ErrorKind::ShapeError, "encoder feature dim must be >= 2");
        std::size_t offset = 0;
        auto add = [&](const char* name, std::size_t n) {
            blocks_.push_back({name, offset, n});
            offset += n;
        };
        add("encoder.conv1.weight", kEncoderHidden * 27);
        add("encoder.conv1.bias", kEncoderHidden);
        add("encoder.conv2.weight", static_cast<std::size_t>(feature_dim_) * kEncoderHidden * 9);
        add("encoder.conv2.bias", static_cast<std::size_t>(feature_dim_));
        values_.assign(offset, T(0));
    }

    void init_he_uniform(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const double fan_in[2] = {27.0, 9.0 * kEncoderHidden};
        for (int layer = 0; layer < 2; ++layer) {
            std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in[layer]), std::sqrt(6.0 / fan_in[layer]));
            auto w = weight(layer);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = T(dist(rng));
            bias(layer).setZero();
        }
        ++generation_;
    }

    int feature_dim() const noexcept { return feature_dim_; }
    std::size_t parameter_count() const noexcept { return values_.size(); }
    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }

    /// Layer 0: 16 x 27; layer 1: F x 144.
    RowMap<T> weight(int layer) {
        return RowMap<T>(values_.data() + blocks_[2 * layer].offset, out_channels(layer), in_width(layer));
    }
    ConstRowMap<T> weight(int layer) const {
        return ConstRowMap<T>(values_.data() + blocks_[2 * layer].offset, out_channels(layer), in_width(layer));
    }
    Eigen::Map<ColVector<T>> bias(int layer) {
        return Eigen::Map<ColVector<T>>(values_.data() + blocks_[2 * layer + 1].offset, out_channels(layer));
    }
    Eigen::Map<const ColVector<T>> bias(int layer) const {
        return Eigen::Map<const ColVector<T>>(values_.data() + blocks_[2 * layer + 1].offset, out_channels(layer));
    }

    std::span<const T> values() const noexcept { return values_; }
    std::span<T> mutable_values() noexcept {
        ++generation_;
        return values_;
    }
    std::uint64_t generation() const noexcept { return generation_; }

    template <typename U>
    EncoderParams<U> cast() const {
        EncoderParams<U> out(feature_dim_);
        auto dst = out.mutable_values();
        std::copy(values_.begin(), values_.end(), dst.begin());
        return out;
    }

private:
    int out_channels(int layer) const { return layer == 0 ? kEncoderHidden : feature_dim_; }
    int in_width(int layer) const { return layer == 0 ? 27 : 9 * kEncoderHidden; }

    int feature_dim_ = 0;
    std::vector<ParameterBlock> blocks_;
    std::vector<T> values_;
    std::uint64_t generation_ = 0;
};

template <typename T>
struct EncoderTape {
    int height = 0;
    int width = 0;
    RowMatrix<T> cols1;  ///< HW x 27
    RowMatrix<T> hidden; ///< HW x 16, post-ReLU
    RowMatrix<T> cols2;  ///< HW x 144
    const void* owner = nullptr;
    std::uint64_t generation = 0;
};

/// Zero-padded 3x3 im2col of an H x W x C buffer: row (y*W + x), column (ky*3 + kx)*C + c.
template <typename T>
RowMatrix<T> im2col3x3(const T* data, int height, int width, int channels) {
    RowMatrix<T> cols = RowMatrix<T>::Zero(static_cast<Eigen::Index>(height) * width, 9 * channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            T* row = cols.data() + (static_cast<std::size_t>(y) * width + x) * 9 * channels;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = x + kx - 1;
                    if (sx < 0 || sx >= width) continue;
                    const T* src = data + (static_cast<std::size_t>(sy) * width + sx) * channels;
                    std::copy(src, src + channels, row + (ky * 3 + kx) * channels);
                }
            }
        }
    }
    return cols;
}

/// Adjoint of im2col3x3: scatters column gradients back to an H x W x C buffer.
template <typename T>
void col2im3x3(const RowMatrix<T>& cols, int height, int width, int channels, T* out) {
    std::fill(out, out + static_cast<std::size_t>(height) * width * channels, T(0));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const T* row = cols.data() + (static_cast<std::size_t>(y) * width + x) * 9 * channels;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = x + kx - 1;
                    if (sx < 0 || sx >= width) continue;
                    T* dst = out + (static_cast<std::size_t>(sy) * width + sx) * channels;
                    const T* src = row + (ky * 3 + kx) * channels;
                    for (int c = 0; c < channels; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

/// H x W x 3 image -> H x W x F feature map at the same resolution.
template <typename T>
TensorBuffer<T> encode_features(const EncoderParams<T>& params, const TensorBuffer<T>& image,
                                EncoderTape<T>* tape = nullptr) {
    if (image.rank() != 3 || image.channels() != 3) throw Error(ErrorKind::ShapeError, "encoder expects H x W x 3");
    const int h = static_cast<int>(image.height());
    const int w = static_cast<int>(image.width());
    if (h < 3 || w < 3) throw Error(ErrorKind::ShapeError, "encoder input must be at least 3 x 3");
    RowMatrix<T> cols1 = im2col3x3(image.data(), h, w, 3);
    const RowMatrix<T> w1 = params.weight(0);
    const RowMatrix<T> w2 = params.weight(1);
    RowMatrix<T> hidden(cols1.rows(), kEncoderHidden);
    hidden.noalias() = cols1 * w1.transpose();
    hidden.rowwise() += params.bias(0).transpose();
    hidden = hidden.cwiseMax(T(0));
    RowMatrix<T> cols2 = im2col3x3(hidden.data(), h, w, kEncoderHidden);
    const int f = params.feature_dim();
    TensorBuffer<T> out = TensorBuffer<T>::image(static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                                                 static_cast<std::size_t>(f));
    RowMatrix<T> result(cols2.rows(), f);
    result.noalias() = cols2 * w2.transpose();
    result.rowwise() += params.bias(1).transpose();
    std::copy(result.data(), result.data() + result.size(), out.data());
    if (tape) {
        tape->height = h;
        tape->width = w;
        tape->cols1 = std::move(cols1);
        tape->hidden = std::move(hidden);
        tape->cols2 = std::move(cols2);
        tape->owner = &params;
        tape->generation = params.generation();
    }
    return out;
}

/// Accumulates encoder parameter gradients for one image given dL/d(feature map).
template <typename T>
void encoder_backward(const EncoderParams<T>& params, const EncoderTape<T>& tape, const TensorBuffer<T>& map_grad,
                      std::span<T> param_grads) {
    if (tape.owner != &params || tape.generation != params.generation()) {
        throw Error(ErrorKind::TapeError, "encoder tape does not belong to the current parameters");
    }
    if (param_grads.size() != params.parameter_count()) {
        throw Error(ErrorKind::ShapeError, "encoder gradient buffer size mismatch");
    }
    const int h = tape.height;
    const int w = tape.width;
    const int f = params.feature_dim();
    const auto& blocks = params.blocks();
    const RowMatrix<T> g = ConstRowMap<T>(map_grad.data(), static_cast<Eigen::Index>(h) * w, f);
    RowMap<T> dw2(param_grads.data() + blocks[2].offset, f, 9 * kEncoderHidden);
    Eigen::Map<ColVector<T>> db2(param_grads.data() + blocks[3].offset, f);
    const RowMatrix<T> dw2l = g.transpose() * tape.cols2;
    const ColVector<T> db2l = g.colwise().sum().transpose();
    dw2 += dw2l;
    db2 += db2l;

    const RowMatrix<T> w2 = params.weight(1);
    RowMatrix<T> dcols2 = g * w2;
    RowMatrix<T> dhidden(static_cast<Eigen::Index>(h) * w, kEncoderHidden);
    col2im3x3(dcols2, h, w, kEncoderHidden, dhidden.data());
    dhidden = dhidden.cwiseProduct((tape.hidden.array() > T(0)).matrix().template cast<T>());

    RowMap<T> dw1(param_grads.data() + blocks[0].offset, kEncoderHidden, 27);
    Eigen::Map<ColVector<T>> db1(param_grads.data() + blocks[1].offset, kEncoderHidden);
    const RowMatrix<T> dw1l = dhidden.transpose() * tape.cols1;
    const ColVector<T> db1l = dhidden.colwise().sum().transpose();
    dw1 += dw1l;
    db1 += db1l;
}

// ---------------------------------------------------------------------------
// Bilinear sampling
// ---------------------------------------------------------------------------

/// Four texel taps of a bilinear lookup (texel centers at integer + 0.5, edges clamped).
struct BilinearTaps {
    std::array<std::size_t, 4> texel; ///< y * W + x
    std::array<double, 4> weight;
};

/// Throws OutOfView unless pixel is in [0, W) x [0, H).
inline BilinearTaps bilinear_taps(std::size_t height, std::size_t width, const Vec2& pixel) {
    if (!(pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < static_cast<double>(width) &&
          pixel.y() < static_cast<double>(height))) {
        throw Error(ErrorKind::OutOfView, "pixel outside feature map");
    }
    const double x = pixel.x() - 0.5;
    const double y = pixel.y() - 0.5;
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const double ax = x - fx0;
    const double ay = y - fy0;
    const long w1 = static_cast<long>(width) - 1;
    const long h1 = static_cast<long>(height) - 1;
    const long x0 = std::clamp(static_cast<long>(fx0), 0L, w1);
    const long x1 = std::clamp(static_cast<long>(fx0) + 1, 0L, w1);
    const long y0 = std::clamp(static_cast<long>(fy0), 0L, h1);
    const long y1 = std::clamp(static_cast<long>(fy0) + 1, 0L, h1);
    BilinearTaps taps;
    taps.texel = {static_cast<std::size_t>(y0 * static_cast<long>(width) + x0),
                  static_cast<std::size_t>(y0 * static_cast<long>(width) + x1),
                  static_cast<std::size_t>(y1 * static_cast<long>(width) + x0),
                  static_cast<std::size_t>(y1 * static_cast<long>(width) + x1)};
    taps.weight = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    return taps;
}

/// Accumulates the bilinear lookup into `out` (length = channels), overwriting it.
template <typename T>
void gather_taps(const TensorBuffer<T>& map, const BilinearTaps& taps, T* out) {
    const std::size_t c = map.channels();
    std::fill(out, out + c, T(0));
    for (int t = 0; t < 4; ++t) {
        const T* src = map.data() + taps.texel[t] * c;
        const T w = T(taps.weight[t]);
        for (std::size_t i = 0; i < c; ++i) out[i] += w * src[i];
    }
}

/// Adjoint of gather_taps.
template <typename T>
void scatter_taps(TensorBuffer<T>& map_grad, const BilinearTaps& taps, const T* grad) {
    const std::size_t c = map_grad.channels();
    for (int t = 0; t < 4; ++t) {
        T* dst = map_grad.data() + taps.texel[t] * c;
        const T w = T(taps.weight[t]);
        for (std::size_t i = 0; i < c; ++i) dst[i] += w * grad[i];
    }
}

/// Bilinear feature lookup at a continuous pixel position.
template <typename T>
std::vector<T> sample_feature(const TensorBuffer<T>& map, const Vec2& pixel) {
    const auto taps = bilinear_taps(map.height(), map.width(), pixel);
    std::vector<T> out(map.channels());
    gather_taps(map, taps, out.data());
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, AdamConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<T> params, std::span<const T> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw Error(ErrorKind::ShapeError, "Adam state size mismatch");
        }
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grads[i]);
            m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
            v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
            const double update = config_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
            params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
        }
    }

    std::size_t size() const noexcept { return m_.size(); }
    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    AdamConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

} // namespace nevrf
