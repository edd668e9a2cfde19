// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "nevrf/error.hpp"

namespace nevrf {

/// Dense row-major buffer with an explicit shape. Rank-3 buffers are used for
/// images and feature maps in H x W x C (channel-fastest) layout.
template <typename T>
class TensorBuffer {
public:
    TensorBuffer() = default;

    explicit TensorBuffer(std::vector<std::size_t> shape, T fill = T{})
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    TensorBuffer(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_)) {
            throw Error(ErrorKind::ShapeError, "tensor data length does not match shape");
        }
    }

    static TensorBuffer image(std::size_t height, std::size_t width, std::size_t channels, T fill = T{}) {
        return TensorBuffer({height, width, channels}, fill);
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t height() const { return shape_.at(0); }
    std::size_t width() const { return shape_.at(1); }
    std::size_t channels() const { return shape_.at(2); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * shape_[1] + x) * shape_[2] + c]; }
    const T& at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    /// Pointer to the channel vector of texel (y, x).
    const T* texel(std::size_t y, std::size_t x) const { return data_.data() + (y * shape_[1] + x) * shape_[2]; }
    T* texel(std::size_t y, std::size_t x) { return data_.data() + (y * shape_[1] + x) * shape_[2]; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    TensorBuffer<U> cast() const {
        return TensorBuffer<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const TensorBuffer&) const = default;

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Image = TensorBuffer<float>;

} // namespace nevrf
