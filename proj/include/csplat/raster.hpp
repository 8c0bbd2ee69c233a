// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"
#include "csplat/geom.hpp"
#include "csplat/image.hpp"
#include "csplat/mask.hpp"

namespace csplat {

inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kCutoffSigma = 3.0;

enum class HitMode { none, counts, records };

struct RenderSettings {
    double lowpass = 0.3;
    int sh_degree = kMaxShDegree;
    std::array<double, 3> background{0, 0, 0};
    HitMode hits = HitMode::none;
    int tile_size = 16;
    bool gaussian_mask = false;
    double mask_threshold = 0.05;
    bool sh_mask = false;
    double sh_mask_threshold = 0.1;
    int threads = 1;
};

/// Screen-space state of one Gaussian after projection and color evaluation.
template <typename T>
struct Splat {
    bool visible = false;
    T depth = 0;
    Vec2<T> mean = Vec2<T>::Zero();
    Mat2<T> cov = Mat2<T>::Identity();  // Sigma' + sI
    T conic[3] = {0, 0, 0};             // inverse covariance (xx, xy, yy)
    T radius = 0;                       // 3 sqrt(lambda_max)
    T opacity = 0;                      // after the Gaussian mask
    Vec3<T> color = Vec3<T>::Zero();
    std::array<bool, 3> clamped{};
    BandMasks<T> band_masks{T(1), T(1), T(1)};
    int degree = 0;
    T gaussian_mask = 1;
};

struct TileBins {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists;  // per tile, front to back
};

/// Inclusive tile range covered by the square [mean - r, mean + r]; empty when
/// the square misses the image.
struct TileRect {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
    bool empty() const { return x1 < x0 || y1 < y0; }
};

template <typename T>
TileRect tile_rect(const Vec2<T>& mean, T radius, int width, int height, int tile_size) {
    TileRect r;
    if (mean.x() + radius < T(0) || mean.x() - radius >= T(width) || mean.y() + radius < T(0) ||
        mean.y() - radius >= T(height))
        return r;
    const int tiles_x = (width + tile_size - 1) / tile_size;
    const int tiles_y = (height + tile_size - 1) / tile_size;
    r.x0 = std::clamp(static_cast<int>(std::floor((mean.x() - radius) / tile_size)), 0, tiles_x - 1);
    r.x1 = std::clamp(static_cast<int>(std::floor((mean.x() + radius) / tile_size)), 0, tiles_x - 1);
    r.y0 = std::clamp(static_cast<int>(std::floor((mean.y() - radius) / tile_size)), 0, tiles_y - 1);
    r.y1 = std::clamp(static_cast<int>(std::floor((mean.y() + radius) / tile_size)), 0, tiles_y - 1);
    return r;
}

/// Assigns visible splats to every tile their 3-sigma square touches. Lists are
/// sorted by depth with ties broken by Gaussian index.
template <typename T>
TileBins bin_tiles(std::span<const Splat<T>> splats, int width, int height, int tile_size) {
    if (tile_size < 1) throw ContractError("bin_tiles: tile_size must be >= 1");
    TileBins bins;
    bins.tile_size = tile_size;
    bins.tiles_x = (width + tile_size - 1) / tile_size;
    bins.tiles_y = (height + tile_size - 1) / tile_size;
    bins.lists.assign(static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y, {});

    std::vector<std::uint32_t> order;
    order.reserve(splats.size());
    for (std::uint32_t i = 0; i < splats.size(); ++i)
        if (splats[i].visible) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return a < b;
    });
    for (std::uint32_t i : order) {
        const auto r = tile_rect(splats[i].mean, splats[i].radius, width, height, tile_size);
        for (int ty = r.y0; ty <= r.y1; ++ty)
            for (int tx = r.x0; tx <= r.x1; ++tx) bins.lists[static_cast<std::size_t>(ty) * bins.tiles_x + tx].push_back(i);
    }
    return bins;
}

template <typename T>
struct HitRecord {
    std::uint32_t gaussian;
    T weight;  // alpha_i * prod_{j<i}(1 - alpha_j)
};

template <typename T>
struct RenderOutput {
    Image<T> image;
    std::vector<T> transmittance;          // final T per pixel
    std::vector<std::uint32_t> n_contrib;  // list entries consumed per pixel
    std::vector<std::uint32_t> hit_counts;  // per Gaussian, when hits != none
    std::vector<std::vector<HitRecord<T>>> hit_records;  // per pixel, when hits == records

    // Auxiliaries consumed by the backward pass.
    std::vector<Splat<T>> splats;
    TileBins bins;
    bool has_aux = false;
};

/// Per-Gaussian parameter gradients plus the screen-space mean gradient used
/// for densification statistics.
template <typename T>
struct GradientBuffer {
    GaussianParams<T> params;
    std::vector<T> mean2d;  // dL/d(mean'), pixels, 2 per Gaussian

    bool all_finite() const {
        if (!params.all_finite()) return false;
        return std::all_of(mean2d.begin(), mean2d.end(), [](T v) { return std::isfinite(v); });
    }
};

/// True when higher SH bands receive gradients at this iteration.
inline bool decimated_sh_backward(long iteration, int cadence) {
    if (cadence < 1) throw ContractError("decimated_sh_backward: cadence must be >= 1");
    return iteration % cadence == 0;
}

namespace detail {

template <typename T>
Splat<T> preprocess_one(const GaussianCloud<T>& cloud, std::size_t i, const Camera& cam, const RenderSettings& s,
                        const Vec3<T>& cam_center) {
    Splat<T> sp;
    const auto& p = cloud.params;
    if (s.gaussian_mask) {
        sp.gaussian_mask = hard_mask(p.mask_logits[i], T(s.mask_threshold)).value;
        if (sp.gaussian_mask == T(0)) return sp;
    }
    sp.opacity = sp.gaussian_mask * cloud.opacity(i);
    const Vec3<T> scale = sp.gaussian_mask * cloud.log_scale(i).array().exp().matrix();
    const Vec3<T> mean = cloud.position(i);
    const auto proj = project_gaussian<T>(mean, covariance_from_scale<T>(scale, cloud.rotation(i)), cam, T(s.lowpass));
    if (!proj) return sp;
    const T det = proj->cov.determinant();
    if (!(det > T(0))) return sp;
    sp.depth = proj->depth;
    sp.mean = proj->mean;
    sp.cov = proj->cov;
    sp.conic[0] = proj->cov(1, 1) / det;
    sp.conic[1] = -proj->cov(0, 1) / det;
    sp.conic[2] = proj->cov(0, 0) / det;
    const T mid = T(0.5) * (proj->cov(0, 0) + proj->cov(1, 1));
    const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
    sp.radius = T(kCutoffSigma) * std::sqrt(lambda_max);
    if (tile_rect(sp.mean, sp.radius, cam.width, cam.height, std::max(1, s.tile_size)).empty()) return sp;

    sp.degree = std::min<int>(s.sh_degree, cloud.sh_bands[i]);
    if (s.sh_mask)
        for (int l = 0; l < 3; ++l) sp.band_masks[l] = hard_mask(p.sh_mask_logits[3 * i + l], T(s.sh_mask_threshold)).value;
    const Vec3<T> v = mean - cam_center;
    const auto c = sh_to_color<T>(cloud.sh(i), v / v.norm(), sp.degree, sp.band_masks);
    sp.color = c.rgb;
    sp.clamped = c.clamped;
    sp.visible = true;
    return sp;
}

/// Blend state of one splat at one pixel; alpha == 0 means "skipped".
template <typename T>
struct PixelAlpha {
    T alpha = 0;
    T gauss = 0;
    T dx = 0, dy = 0;
    bool saturated = false;
};

template <typename T>
inline PixelAlpha<T> pixel_alpha(const Splat<T>& sp, T px, T py) {
    PixelAlpha<T> a;
    a.dx = px - sp.mean.x();
    a.dy = py - sp.mean.y();
    const T maha = sp.conic[0] * a.dx * a.dx + T(2) * sp.conic[1] * a.dx * a.dy + sp.conic[2] * a.dy * a.dy;
    if (!(maha <= T(kCutoffSigma * kCutoffSigma))) return a;
    a.gauss = std::exp(T(-0.5) * maha);
    const T raw = sp.opacity * a.gauss;
    a.saturated = raw > T(kMaxAlpha);
    const T alpha = a.saturated ? T(kMaxAlpha) : raw;
    if (alpha < T(kMinAlpha)) return a;
    a.alpha = alpha;
    return a;
}

}  // namespace detail

/// Projects, bins and alpha-blends the cloud front to back.
template <typename T>
RenderOutput<T> render_forward(const GaussianCloud<T>& cloud, const Camera& cam, const RenderSettings& s) {
    cam.validate();
    cloud.validate();
    if (s.tile_size < 1) throw ContractError("render_forward: tile_size must be >= 1");
    const std::size_t n = cloud.size();
    const int w = cam.width, h = cam.height;
    RenderOutput<T> out;
    out.image = Image<T>(w, h, 3);
    out.transmittance.assign(static_cast<std::size_t>(w) * h, T(1));
    out.n_contrib.assign(static_cast<std::size_t>(w) * h, 0);
    if (s.hits != HitMode::none) out.hit_counts.assign(n, 0);
    if (s.hits == HitMode::records) out.hit_records.assign(static_cast<std::size_t>(w) * h, {});

    const Vec3<T> cam_center = cam.center().cast<T>();
    out.splats.resize(n);
    const int workers = effective_workers(s.threads, n);
    parallel_for(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) out.splats[i] = detail::preprocess_one(cloud, i, cam, s, cam_center);
    });
    out.bins = bin_tiles<T>(out.splats, w, h, s.tile_size);

    const Vec3<T> bg(T(s.background[0]), T(s.background[1]), T(s.background[2]));
    const std::size_t tiles = out.bins.lists.size();
    const int tile_workers = effective_workers(s.threads, tiles);
    std::vector<std::vector<std::uint32_t>> worker_hits(s.hits != HitMode::none ? tile_workers : 0,
                                                        std::vector<std::uint32_t>(n, 0));
    parallel_for(tiles, tile_workers, [&](std::size_t tb, std::size_t te, int worker) {
        for (std::size_t t = tb; t < te; ++t) {
            const auto& list = out.bins.lists[t];
            const int tx = static_cast<int>(t % out.bins.tiles_x), ty = static_cast<int>(t / out.bins.tiles_x);
            for (int y = ty * s.tile_size; y < std::min(h, (ty + 1) * s.tile_size); ++y) {
                for (int x = tx * s.tile_size; x < std::min(w, (tx + 1) * s.tile_size); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    const T px = T(x) + T(0.5), py = T(y) + T(0.5);
                    T trans = T(1);
                    Vec3<T> c = Vec3<T>::Zero();
                    std::uint32_t last = 0;
                    for (std::uint32_t k = 0; k < list.size(); ++k) {
                        const auto& sp = out.splats[list[k]];
                        const auto a = detail::pixel_alpha(sp, px, py);
                        if (a.alpha == T(0)) continue;
                        const T next = trans * (T(1) - a.alpha);
                        if (next < T(kMinTransmittance)) break;
                        const T weight = a.alpha * trans;
                        c += sp.color * weight;
                        if (s.hits != HitMode::none) ++worker_hits[worker][list[k]];
                        if (s.hits == HitMode::records) out.hit_records[pix].push_back({list[k], weight});
                        trans = next;
                        last = k + 1;
                    }
                    c += bg * trans;
                    for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = c[ch];
                    out.transmittance[pix] = trans;
                    out.n_contrib[pix] = last;
                }
            }
        }
    });
    for (const auto& wh : worker_hits)
        for (std::size_t i = 0; i < n; ++i) out.hit_counts[i] += wh[i];
    out.has_aux = true;
    return out;
}

/// Analytic gradients of sum(d_image * image) with respect to every attribute.
/// Higher SH bands receive gradients only when `sh_higher_bands` is set.
template <typename T>
GradientBuffer<T> render_backward(const GaussianCloud<T>& cloud, const Camera& cam, const RenderSettings& s,
                                  const RenderOutput<T>& fwd, const Image<T>& d_image, bool sh_higher_bands = true) {
    const std::size_t n = cloud.size();
    const int w = cam.width, h = cam.height;
    if (!fwd.has_aux || fwd.splats.size() != n || fwd.image.width != w || fwd.image.height != h ||
        fwd.n_contrib.size() != static_cast<std::size_t>(w) * h)
        throw ContractError("render_backward: forward auxiliaries missing or from a different render");
    if (d_image.width != w || d_image.height != h || d_image.channels != 3)
        throw ContractError("render_backward: upstream gradient has the wrong shape");

    struct Partial {
        T d_mean[2] = {0, 0};
        T d_conic[3] = {0, 0, 0};
        T d_opacity = 0;
        T d_color[3] = {0, 0, 0};
    };
    const Vec3<T> bg(T(s.background[0]), T(s.background[1]), T(s.background[2]));
    const std::size_t tiles = fwd.bins.lists.size();
    const int tile_workers = effective_workers(s.threads, tiles);
    std::vector<std::vector<Partial>> partials(tile_workers, std::vector<Partial>(n));
    parallel_for(tiles, tile_workers, [&](std::size_t tb, std::size_t te, int worker) {
        auto& acc = partials[worker];
        for (std::size_t t = tb; t < te; ++t) {
            const auto& list = fwd.bins.lists[t];
            const int ts = fwd.bins.tile_size;
            const int tx = static_cast<int>(t % fwd.bins.tiles_x), ty = static_cast<int>(t / fwd.bins.tiles_x);
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    const Vec3<T> d_pix(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
                    if (d_pix.isZero()) continue;
                    const T px = T(x) + T(0.5), py = T(y) + T(0.5);
                    const T final_t = fwd.transmittance[pix];
                    const T bg_dot = bg.dot(d_pix);
                    T trans = final_t;
                    Vec3<T> accum = Vec3<T>::Zero();  // color blended behind the current splat
                    Vec3<T> last_color = Vec3<T>::Zero();
                    T last_alpha = 0;
                    for (std::uint32_t k = fwd.n_contrib[pix]; k-- > 0;) {
                        const std::uint32_t g = list[k];
                        const auto& sp = fwd.splats[g];
                        const auto a = detail::pixel_alpha(sp, px, py);
                        if (a.alpha == T(0)) continue;
                        trans = trans / (T(1) - a.alpha);
                        accum = last_alpha * last_color + (T(1) - last_alpha) * accum;
                        last_color = sp.color;
                        last_alpha = a.alpha;
                        auto& pg = acc[g];
                        const T weight = a.alpha * trans;
                        for (int ch = 0; ch < 3; ++ch) pg.d_color[ch] += weight * d_pix[ch];
                        T d_alpha = trans * (sp.color - accum).dot(d_pix);
                        d_alpha += -final_t / (T(1) - a.alpha) * bg_dot;
                        if (a.saturated) continue;
                        pg.d_opacity += a.gauss * d_alpha;
                        const T d_power = sp.opacity * a.gauss * d_alpha;
                        pg.d_mean[0] += d_power * (sp.conic[0] * a.dx + sp.conic[1] * a.dy);
                        pg.d_mean[1] += d_power * (sp.conic[1] * a.dx + sp.conic[2] * a.dy);
                        pg.d_conic[0] += T(-0.5) * a.dx * a.dx * d_power;
                        pg.d_conic[1] += T(-0.5) * a.dx * a.dy * d_power;
                        pg.d_conic[2] += T(-0.5) * a.dy * a.dy * d_power;
                    }
                }
            }
        }
    });

    GradientBuffer<T> grad;
    grad.params = GaussianParams<T>::zeros(n);
    grad.mean2d.assign(2 * n, T(0));
    const Vec3<T> cam_center = cam.center().cast<T>();
    const int workers = effective_workers(s.threads, n);
    parallel_for(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& sp = fwd.splats[i];
            if (!sp.visible) continue;
            Partial pg;
            for (const auto& part : partials) {
                const auto& q = part[i];
                for (int k = 0; k < 2; ++k) pg.d_mean[k] += q.d_mean[k];
                for (int k = 0; k < 3; ++k) pg.d_conic[k] += q.d_conic[k];
                pg.d_opacity += q.d_opacity;
                for (int k = 0; k < 3; ++k) pg.d_color[k] += q.d_color[k];
            }
            auto& gp = grad.params;
            grad.mean2d[2 * i] = pg.d_mean[0];
            grad.mean2d[2 * i + 1] = pg.d_mean[1];

            const Vec3<T> mean = cloud.position(i);
            const Vec3<T> raw_scale = cloud.log_scale(i).array().exp().matrix();
            const Vec3<T> scale = sp.gaussian_mask * raw_scale;
            const auto rot = cloud.rotation(i);

            // Color: SH coefficients, band masks and the view direction.
            const Vec3<T> v = mean - cam_center;
            const T vnorm = v.norm();
            const Vec3<T> dir = v / vnorm;
            const auto cg = sh_to_color_vjp<T>(cloud.sh(i), dir, sp.degree, sp.band_masks, sp.clamped,
                                                Vec3<T>(pg.d_color[0], pg.d_color[1], pg.d_color[2]),
                                                std::span<T>(gp.sh.data() + kShFloats * i, kShFloats), sh_higher_bands);
            Vec3<T> d_mean = (cg.d_dir - dir * dir.dot(cg.d_dir)) / vnorm;
            if (s.sh_mask)
                for (int l = 0; l < 3; ++l)
                    gp.sh_mask_logits[3 * i + l] = cg.d_band_mask[l] * sigmoid_grad(cloud.params.sh_mask_logits[3 * i + l]);

            // Conic -> 2D covariance -> 3D mean and covariance.
            Mat2<T> conic;
            conic << sp.conic[0], sp.conic[1], sp.conic[1], sp.conic[2];
            Mat2<T> d_conic;
            d_conic << pg.d_conic[0], pg.d_conic[1], pg.d_conic[1], pg.d_conic[2];
            const Mat2<T> d_cov2 = -conic * d_conic * conic;
            const Mat3<T> cov3 = covariance_from_scale<T>(scale, rot);
            const auto pgrad = project_gaussian_vjp<T>(mean, cov3, cam, Vec2<T>(pg.d_mean[0], pg.d_mean[1]), d_cov2);
            d_mean += pgrad.d_mean;
            const auto covg = covariance_from_scale_vjp<T>(scale, rot, pgrad.d_cov3);

            for (int k = 0; k < 3; ++k) {
                gp.positions[3 * i + k] = d_mean[k];
                gp.log_scales[3 * i + k] = covg.d_scale[k] * scale[k];
            }
            for (int k = 0; k < 4; ++k) gp.rotations[4 * i + k] = covg.d_rotation[k];
            const T alpha = cloud.opacity(i);
            gp.opacity_logits[i] = pg.d_opacity * sp.gaussian_mask * alpha * (T(1) - alpha);
            if (s.gaussian_mask) {
                const T d_m = covg.d_scale.dot(raw_scale) + pg.d_opacity * alpha;
                gp.mask_logits[i] = d_m * sigmoid_grad(cloud.params.mask_logits[i]);
            }
        }
    });
    return grad;
}

}  // namespace csplat
