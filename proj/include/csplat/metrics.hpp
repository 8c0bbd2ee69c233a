// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "csplat/common.hpp"
#include "csplat/image.hpp"

namespace csplat {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;

    double c1() const { return (0.01 * dynamic_range) * (0.01 * dynamic_range); }
    double c2() const { return (0.03 * dynamic_range) * (0.03 * dynamic_range); }
    void validate() const {
        if (window < 1 || window % 2 == 0) throw ConfigError("ssim window must be odd and positive");
        if (!(sigma > 0)) throw ConfigError("ssim sigma must be positive");
    }
};

/// Returns +inf for identical images.
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b) {
    if (!a.same_shape(b)) throw ContractError("psnr: image shapes differ");
    if (a.data.empty()) throw ContractError("psnr: empty image");
    double se = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

template <typename T>
void check_ssim_inputs(const Image<T>& a, const Image<T>& b, const SsimParams& p) {
    p.validate();
    if (!a.same_shape(b)) throw ContractError("ssim: image shapes differ");
    if (a.width < p.window || a.height < p.window)
        throw ContractError("ssim: image smaller than the window");
}

inline double ssim_at(double mu_a, double mu_b, double var_a, double var_b, double cov, double c1, double c2) {
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

// Planar double buffer, one plane per channel.
struct Planes {
    int w = 0, h = 0, c = 0;
    std::vector<double> v;
    Planes(int w_, int h_, int c_) : w(w_), h(h_), c(c_), v(static_cast<std::size_t>(w_) * h_ * c_, 0.0) {}
    double& at(int x, int y, int ch) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int x, int y, int ch) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

inline Planes conv_separable(const Planes& src, const std::vector<double>& taps, int threads) {
    const int r = static_cast<int>(taps.size()) / 2;
    Planes tmp(src.w, src.h, src.c), out(src.w, src.h, src.c);
    const int rows = src.h * src.c;
    parallel_for(static_cast<std::size_t>(rows), threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t row = b; row < e; ++row) {
            const int ch = static_cast<int>(row) / src.h, y = static_cast<int>(row) % src.h;
            for (int x = 0; x < src.w; ++x) {
                double acc = 0;
                for (int k = 0; k < static_cast<int>(taps.size()); ++k)
                    acc += taps[k] * src.at(reflect_index(x + k - r, src.w), y, ch);
                tmp.at(x, y, ch) = acc;
            }
        }
    });
    parallel_for(static_cast<std::size_t>(rows), threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t row = b; row < e; ++row) {
            const int ch = static_cast<int>(row) / src.h, y = static_cast<int>(row) % src.h;
            for (int x = 0; x < src.w; ++x) {
                double acc = 0;
                for (int k = 0; k < static_cast<int>(taps.size()); ++k)
                    acc += taps[k] * tmp.at(x, reflect_index(y + k - r, src.h), ch);
                out.at(x, y, ch) = acc;
            }
        }
    });
    return out;
}

// Adjoint of conv_separable: every output gathered src[reflect(i + k - r)],
// so the adjoint scatters g[i] back to those sources. Vertical pass first.
inline Planes conv_separable_adjoint(const Planes& g, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size()) / 2;
    Planes tmp(g.w, g.h, g.c), out(g.w, g.h, g.c);
    for (int ch = 0; ch < g.c; ++ch)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                const double v = g.at(x, y, ch);
                for (int k = 0; k < static_cast<int>(taps.size()); ++k)
                    tmp.at(x, reflect_index(y + k - r, g.h), ch) += taps[k] * v;
            }
    for (int ch = 0; ch < g.c; ++ch)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                const double v = tmp.at(x, y, ch);
                for (int k = 0; k < static_cast<int>(taps.size()); ++k)
                    out.at(reflect_index(x + k - r, g.w), y, ch) += taps[k] * v;
            }
    return out;
}

}  // namespace detail

/// Mean SSIM with a full 2D Gaussian window evaluated at every pixel.
template <typename T>
double ssim_reference(const Image<T>& a, const Image<T>& b, const SsimParams& p = {}) {
    detail::check_ssim_inputs(a, b, p);
    const auto taps = gaussian_taps(p.window, p.sigma);
    const int r = p.window / 2;
    const double c1 = p.c1(), c2 = p.c2();
    double total = 0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double ma = 0, mb = 0, eaa = 0, ebb = 0, eab = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const double w = taps[dy + r] * taps[dx + r];
                        const int sx = reflect_index(x + dx, a.width), sy = reflect_index(y + dy, a.height);
                        const double va = a.at(sx, sy, c), vb = b.at(sx, sy, c);
                        ma += w * va;
                        mb += w * vb;
                        eaa += w * va * va;
                        ebb += w * vb * vb;
                        eab += w * va * vb;
                    }
                total += detail::ssim_at(ma, mb, eaa - ma * ma, ebb - mb * mb, eab - ma * mb, c1, c2);
            }
    return total / static_cast<double>(a.data.size());
}

template <typename T>
struct SsimResult {
    double value = 0;
    Image<T> grad;  // d(mean SSIM)/d(a), empty unless requested
};

/// Mean SSIM via horizontal-then-vertical 1D convolutions of the five local
/// statistics, plus the analytic gradient with respect to `a`.
template <typename T>
SsimResult<T> ssim_fast(const Image<T>& a, const Image<T>& b, const SsimParams& p = {}, bool want_grad = true,
                        int threads = 1) {
    detail::check_ssim_inputs(a, b, p);
    const int w = a.width, h = a.height, nc = a.channels;
    const auto taps = gaussian_taps(p.window, p.sigma);
    const double c1 = p.c1(), c2 = p.c2();

    detail::Planes pa(w, h, nc), pb(w, h, nc), paa(w, h, nc), pbb(w, h, nc), pab(w, h, nc);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c) {
                const double va = a.at(x, y, c), vb = b.at(x, y, c);
                pa.at(x, y, c) = va;
                pb.at(x, y, c) = vb;
                paa.at(x, y, c) = va * va;
                pbb.at(x, y, c) = vb * vb;
                pab.at(x, y, c) = va * vb;
            }
    const auto mu_a = detail::conv_separable(pa, taps, threads);
    const auto mu_b = detail::conv_separable(pb, taps, threads);
    const auto e_aa = detail::conv_separable(paa, taps, threads);
    const auto e_bb = detail::conv_separable(pbb, taps, threads);
    const auto e_ab = detail::conv_separable(pab, taps, threads);

    const double inv_n = 1.0 / static_cast<double>(a.data.size());
    detail::Planes d_mu(w, h, nc), d_eaa(w, h, nc), d_eab(w, h, nc);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = e_aa.v[i] - ma * ma, vb = e_bb.v[i] - mb * mb, cov = e_ab.v[i] - ma * mb;
        const double a1 = 2 * ma * mb + c1, a2 = 2 * cov + c2;
        const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (want_grad) {
            d_mu.v[i] = inv_n * (2 * mb * (a2 - a1) / (b1 * b2) - 2 * ma * s * (1 / b1 - 1 / b2));
            d_eaa.v[i] = inv_n * (-s / b2);
            d_eab.v[i] = inv_n * (2 * a1 / (b1 * b2));
        }
    }
    SsimResult<T> out;
    out.value = total * inv_n;
    if (!want_grad) return out;

    const auto g_mu = detail::conv_separable_adjoint(d_mu, taps);
    const auto g_aa = detail::conv_separable_adjoint(d_eaa, taps);
    const auto g_ab = detail::conv_separable_adjoint(d_eab, taps);
    out.grad = Image<T>(w, h, nc);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c)
                out.grad.at(x, y, c) = static_cast<T>(g_mu.at(x, y, c) + 2 * pa.at(x, y, c) * g_aa.at(x, y, c) +
                                                      pb.at(x, y, c) * g_ab.at(x, y, c));
    return out;
}

}  // namespace csplat
