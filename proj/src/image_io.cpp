// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/image_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include <png.h>

#include "nevrf/error.hpp"

namespace nevrf {
namespace {

using FilePtr = std::unique_ptr<std::FILE, decltype(&std::fclose)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr file(std::fopen(path.c_str(), mode), &std::fclose);
    if (!file) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return file;
}

Image read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorKind::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::FormatError, "corrupt PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<png_byte> pixels(stride * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image image = Image::image(height, width, 3);
    for (png_uint_32 y = 0; y < height; ++y) {
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) image.at(y, x, c) = static_cast<float>(rows[y][3 * x + c]) / 255.0f;
        }
    }
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(ErrorKind::Io, "png_create_info_struct failed");
    }
    const auto height = static_cast<png_uint_32>(image.height());
    const auto width = static_cast<png_uint_32>(image.width());
    std::vector<png_byte> pixels(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = quantize_unit(image[i]);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Io, "failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Skips whitespace and '#' comments in a PPM header.
void skip_ppm_space(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw Error(ErrorKind::FormatError, "not a binary PPM: " + path.string());
    std::size_t width = 0, height = 0, maxval = 0;
    skip_ppm_space(in);
    in >> width;
    skip_ppm_space(in);
    in >> height;
    skip_ppm_space(in);
    in >> maxval;
    in.get();
    if (!in || width == 0 || height == 0 || maxval != 255) {
        throw Error(ErrorKind::FormatError, "unsupported PPM header in " + path.string());
    }
    std::vector<unsigned char> bytes(width * height * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw Error(ErrorKind::FormatError, "truncated PPM " + path.string());
    Image image = Image::image(height, width, 3);
    for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = static_cast<float>(bytes[i]) / 255.0f;
    return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
    out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_unit(image[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

} // namespace

std::uint8_t quantize_unit(float value) {
    const float clamped = std::clamp(value, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

Image read_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::array<unsigned char, 8> signature{};
    probe.read(reinterpret_cast<char*>(signature.data()), signature.size());
    probe.close();
    if (png_sig_cmp(signature.data(), 0, signature.size()) == 0) return read_png(path);
    if (signature[0] == 'P' && signature[1] == '6') return read_ppm(path);
    throw Error(ErrorKind::FormatError, "unrecognized image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& image) {
    if (image.rank() != 3 || image.channels() != 3) {
        throw Error(ErrorKind::ShapeError, "write_image expects H x W x 3");
    }
    if (path.extension() == ".ppm") {
        write_ppm(path, image);
    } else {
        write_png(path, image);
    }
}

} // namespace nevrf
