// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "csplat/common.hpp"
#include "csplat/image.hpp"

namespace csplat {

/// Float in [0, 1] to 8 bits, round to nearest.
inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Rounds every value to the nearest representable 8-bit level.
template <typename T>
void quantize_8bit(Image<T>& img) {
    for (auto& v : img.data) v = static_cast<T>(to_byte(v) / 255.0);
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

template <typename T>
void write_png(const Image<T>& img, const std::filesystem::path& path) {
    if (img.channels != 3) throw ContractError("write_png: expects 3 channels");
    detail::FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw InputError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialization failed");
    }
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(img.width) * img.height * 3);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = to_byte(static_cast<double>(img.data[i]));
    std::vector<png_bytep> ptrs(img.height);
    for (int y = 0; y < img.height; ++y) ptrs[y] = rows.data() + static_cast<std::size_t>(y) * img.width * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng failed writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads any 8/16-bit PNG and returns RGB in [0, 1] (alpha dropped, gray expanded).
template <typename T = float>
Image<T> read_png(const std::filesystem::path& path) {
    detail::FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw InputError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw FormatError("not a PNG file: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialization failed");
    }
    std::vector<std::uint8_t> rows;
    std::vector<png_bytep> ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    rows.resize(stride * h);
    ptrs.resize(h);
    for (int y = 0; y < h; ++y) ptrs[y] = rows.data() + stride * y;
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    Image<T> img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<T>(rows[stride * y + 3 * x + c] / 255.0);
    return img;
}

template <typename T>
void write_ppm(const Image<T>& img, const std::filesystem::path& path) {
    if (img.channels != 3) throw ContractError("write_ppm: expects 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string() + " for writing");
    f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (T v : img.data) f.put(static_cast<char>(to_byte(static_cast<double>(v))));
}

template <typename T = float>
Image<T> read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    auto token = [&]() {
        std::string t;
        char c;
        while (f.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(f, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(c);
        }
        return t;
    };
    if (token() != "P6") throw FormatError("not a binary PPM: " + path.string());
    int w = 0, h = 0, maxv = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxv = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PPM header: " + path.string());
    }
    if (w < 1 || h < 1 || maxv != 255) throw FormatError("unsupported PPM: " + path.string());
    Image<T> img(w, h, 3);
    std::vector<char> bytes(img.data.size());
    if (!f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw FormatError("truncated PPM: " + path.string());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<T>(static_cast<unsigned char>(bytes[i]) / 255.0);
    return img;
}

/// Dispatches on the extension (.png or .ppm).
template <typename T = float>
Image<T> read_image(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".png" || ext == ".PNG") return read_png<T>(path);
    if (ext == ".ppm" || ext == ".PPM") return read_ppm<T>(path);
    throw InputError("unsupported image format: " + path.string());
}

template <typename T>
void write_image(const Image<T>& img, const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".png" || ext == ".PNG") return write_png(img, path);
    if (ext == ".ppm" || ext == ".PPM") return write_ppm(img, path);
    throw InputError("unsupported image format: " + path.string());
}

}  // namespace csplat
