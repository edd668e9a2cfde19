// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "nevrf/tensor.hpp"

namespace nevrf {

/// Reads an 8-bit RGB PNG or binary PPM (P6) into an H x W x 3 image in [0,1].
/// The format is chosen by file signature, not extension.
Image read_image(const std::filesystem::path& path);

/// Writes an H x W x 3 image, linear values clamped to [0,1] and quantized to
/// 8 bits. ".ppm" writes P6; anything else writes PNG.
void write_image(const std::filesystem::path& path, const Image& image);

/// 8-bit quantization used by write_image.
std::uint8_t quantize_unit(float value);

} // namespace nevrf
