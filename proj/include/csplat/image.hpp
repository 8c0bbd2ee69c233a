// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "csplat/common.hpp"

namespace csplat {

/// Interleaved H x W x C image (row-major, channel innermost).
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 3, T fill = T(0))
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    T& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    const T& at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(width, height, channels);
        std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }
};

/// Box-filter (area) resampling to an arbitrary size; exact average of the
/// covered source area per destination pixel.
template <typename T>
Image<T> resize_area(const Image<T>& src, int w, int h) {
    if (w == src.width && h == src.height) return src;
    Image<T> dst(w, h, src.channels);
    const double sx = static_cast<double>(src.width) / w;
    const double sy = static_cast<double>(src.height) / h;
    std::vector<double> acc(src.channels);
    for (int y = 0; y < h; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < w; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            std::fill(acc.begin(), acc.end(), 0.0);
            double area = 0;
            for (int yy = static_cast<int>(y0); yy < std::min(src.height, static_cast<int>(std::ceil(y1))); ++yy) {
                const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                if (wy <= 0) continue;
                for (int xx = static_cast<int>(x0); xx < std::min(src.width, static_cast<int>(std::ceil(x1))); ++xx) {
                    const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                    if (wx <= 0) continue;
                    for (int c = 0; c < src.channels; ++c) acc[c] += wx * wy * src.at(xx, yy, c);
                    area += wx * wy;
                }
            }
            for (int c = 0; c < src.channels; ++c) dst.at(x, y, c) = static_cast<T>(acc[c] / area);
        }
    }
    return dst;
}

/// Normalized 1D Gaussian taps of the given odd size.
inline std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> w(size);
    const int r = size / 2;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - r;
        w[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

/// Mirror index without edge repetition (d c b | a b c d | c b a).
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

/// Separable Gaussian blur with reflected borders.
template <typename T>
Image<T> gaussian_blur(const Image<T>& src, int kernel_size, double sigma) {
    if (kernel_size <= 1 || sigma <= 0) return src;
    const auto taps = gaussian_taps(kernel_size, sigma);
    const int r = kernel_size / 2;
    Image<T> tmp(src.width, src.height, src.channels);
    Image<T> out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < src.channels; ++c) {
                double acc = 0;
                for (int k = 0; k < kernel_size; ++k) acc += taps[k] * src.at(reflect_index(x + k - r, src.width), y, c);
                tmp.at(x, y, c) = static_cast<T>(acc);
            }
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int c = 0; c < src.channels; ++c) {
                double acc = 0;
                for (int k = 0; k < kernel_size; ++k) acc += taps[k] * tmp.at(x, reflect_index(y + k - r, src.height), c);
                out.at(x, y, c) = static_cast<T>(acc);
            }
    return out;
}

}  // namespace csplat
