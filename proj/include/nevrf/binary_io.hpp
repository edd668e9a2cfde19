// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "nevrf/error.hpp"

namespace nevrf {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte sink.
class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    template <typename T>
    void put_span(std::span<const T> values) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    void put_bytes(std::string_view text) { bytes_.insert(bytes_.end(), text.begin(), text.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; every overrun raises FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    template <typename T>
    std::vector<T> get_vector(std::uint64_t count) {
        static_assert(std::is_trivially_copyable_v<T>);
        if (count > remaining() / sizeof(T)) throw Error(ErrorKind::FormatError, "length field exceeds stream");
        std::vector<T> values(static_cast<std::size_t>(count));
        std::memcpy(values.data(), bytes_.data() + offset_, values.size() * sizeof(T));
        offset_ += values.size() * sizeof(T);
        return values;
    }

    std::string get_string(std::size_t length) {
        require(length);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), length);
        offset_ += length;
        return s;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - offset_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    void require(std::size_t n) const {
        if (n > remaining()) throw Error(ErrorKind::FormatError, "truncated stream");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace nevrf
