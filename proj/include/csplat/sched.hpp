// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"
#include "csplat/geom.hpp"

namespace csplat {

/// Iteration boundaries of every training phase. Defaults describe a 30K run.
struct Timeline {
    int total_iters = 30000;
    int progressive_end = 19500;  // blur and resolution ramps end here
    int densify_from = 500;
    int densify_interval = 100;
    int densify_until = 15000;
    int late_densify_begin = 20000;
    int late_densify_end = 20500;
    int late_densify_interval = 100;
    int mask_prune_interval = 500;
    int blur_step = 100;
    int progressive_scale_until = 10000;
    int sh_cadence = 16;
    std::vector<int> significance_events{15500, 16800, 18100, 19400, 20700, 22000};

    void validate() const {
        auto bound = [&](int v, const char* name) {
            if (v < 0 || v > total_iters) throw ConfigError(std::string("timeline: ") + name + " outside [0, total_iters]");
        };
        if (total_iters < 1) throw ConfigError("timeline: total_iters must be >= 1");
        bound(progressive_end, "progressive_end");
        bound(densify_from, "densify_from");
        bound(densify_until, "densify_until");
        bound(late_densify_begin, "late_densify_begin");
        bound(late_densify_end, "late_densify_end");
        bound(progressive_scale_until, "progressive_scale_until");
        for (int e : significance_events) bound(e, "significance event");
        for (int v : {densify_interval, late_densify_interval, mask_prune_interval, blur_step, sh_cadence})
            if (v < 1) throw ConfigError("timeline: intervals must be >= 1");
        if (late_densify_end < late_densify_begin) throw ConfigError("timeline: late densify window is reversed");
    }

    bool in_late_window(int i) const { return i >= late_densify_begin && i <= late_densify_end; }

    /// Same phase layout compressed to `total` iterations: every boundary is
    /// scaled proportionally, intervals and cadences are kept.
    Timeline scaled_to(int total) const {
        Timeline t = *this;
        const double f = static_cast<double>(total) / total_iters;
        auto sc = [&](int v) { return static_cast<int>(std::lround(v * f)); };
        t.total_iters = total;
        t.progressive_end = sc(progressive_end);
        t.densify_from = sc(densify_from);
        t.densify_until = sc(densify_until);
        t.late_densify_begin = sc(late_densify_begin);
        t.late_densify_end = sc(late_densify_end);
        t.progressive_scale_until = sc(progressive_scale_until);
        for (auto& e : t.significance_events) e = sc(e);
        return t;
    }
};

enum class ResolutionMode { linear, logarithmic };

/// Training resolution for one image dimension at iteration i.
inline int resolution_at(int i, int res_s, int res_e, int tau_res, ResolutionMode mode) {
    if (res_s <= 0 || res_s > res_e) throw ConfigError("resolution_at: need 0 < res_s <= res_e");
    if (tau_res <= 0) throw ConfigError("resolution_at: tau_res must be positive");
    if (i >= tau_res) return res_e;
    const double t = static_cast<double>(std::max(i, 0)) / tau_res;
    double r;
    if (mode == ResolutionMode::linear)
        r = res_s + (res_e - res_s) * t;
    else
        r = res_s * std::pow(static_cast<double>(res_e) / res_s, t);
    return std::min(static_cast<int>(std::floor(r + 0.5)), res_e);
}

/// Starting size of one dimension for a downsample factor; never below the
/// 16-pixel floor (or the full size) so the SSIM window always fits.
inline int start_resolution(int full, double downsample) {
    const int scaled = static_cast<int>(std::lround(full / downsample));
    return std::max(scaled, std::min(full, 16));
}

struct BlurSpec {
    int kernel_size = 1;
    double sigma = 0;
    bool enabled() const { return kernel_size > 1; }
};

inline constexpr double kMinBlurSigma = 0.3;

/// Decay factor that brings sigma0 down to the 0.3 floor exactly at tau_prog.
inline double default_blur_decay(double sigma0, int blur_step, int tau_prog) {
    if (sigma0 <= kMinBlurSigma) return 0.5;
    return std::pow(kMinBlurSigma / sigma0, static_cast<double>(blur_step) / tau_prog);
}

inline int odd_size_for_sigma(double sigma) { return 2 * static_cast<int>(std::ceil(2 * sigma)) + 1; }

/// Nearest odd integer >= 1.
inline int nearest_odd(double v) { return std::max(1, 2 * static_cast<int>(std::lround((v - 1) / 2)) + 1); }

/// Blur applied to training targets at iteration i. `downsample` is the ratio
/// of full to current training resolution.
inline BlurSpec blur_at(int i, const BlurSpec& spec0, int blur_step, double decay, int tau_prog, double downsample = 1.0) {
    if (!(decay > 0 && decay < 1)) throw ConfigError("blur_at: decay must be in (0, 1)");
    if (blur_step < 1) throw ConfigError("blur_at: blur step must be >= 1");
    if (i >= tau_prog || !spec0.enabled()) return {};
    const double sigma = spec0.sigma * std::pow(decay, i / blur_step) / downsample;
    if (sigma < kMinBlurSigma) return {};
    const int cap = nearest_odd(spec0.kernel_size / downsample);
    const int size = std::min(odd_size_for_sigma(sigma), cap);
    if (size <= 1) return {};
    return {size, sigma};
}

inline constexpr double kLowpassFloor = 0.3;

/// Low-pass value that keeps the average projected footprint above 9*pi*s.
inline double lowpass_s_at(std::size_t n, int h, int w) {
    if (n < 1) throw ContractError("lowpass_s_at: need at least one Gaussian");
    return std::max(kLowpassFloor, static_cast<double>(h) * w / (9.0 * M_PI * static_cast<double>(n)));
}

struct SfmPoint {
    Vec3<double> xyz;
    Vec3<double> rgb;  // [0, 1]
    double error = 0;
};

inline constexpr double kSeedOpacity = 0.1;

/// Indices of the ceil(keep_fraction * P) lowest-error points, ties by index,
/// returned in ascending index order.
inline std::vector<std::size_t> select_sfm_points(const std::vector<SfmPoint>& points, double keep_fraction) {
    if (points.empty()) throw InputError("seed_from_sfm: no points");
    if (!(keep_fraction > 0 && keep_fraction <= 1)) throw ConfigError("seed_from_sfm: keep_fraction must be in (0, 1]");
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points[a].error < points[b].error; });
    const auto keep = std::min(points.size(), static_cast<std::size_t>(std::ceil(keep_fraction * points.size() - 1e-9)));
    order.resize(std::max<std::size_t>(keep, 1));
    std::sort(order.begin(), order.end());
    return order;
}

/// Mean distance from each point to its k nearest others, using a uniform grid.
inline std::vector<double> mean_knn_distance(const std::vector<Vec3<double>>& pts, int k = 3) {
    const std::size_t n = pts.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    Vec3<double> lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3<double> extent = (hi - lo).cwiseMax(Vec3<double>::Constant(1e-9));
    const int per_axis = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(n) / 2)), 1, 128);
    const Vec3<double> cell = extent / per_axis;
    auto cell_of = [&](const Vec3<double>& p) {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>((p[a] - lo[a]) / cell[a]), 0, per_axis - 1);
        return c;
    };
    std::vector<std::vector<std::size_t>> grid(static_cast<std::size_t>(per_axis) * per_axis * per_axis);
    auto flat = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * per_axis + y) * per_axis + x; };
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = cell_of(pts[i]);
        grid[flat(c[0], c[1], c[2])].push_back(i);
    }
    const int want = static_cast<int>(std::min<std::size_t>(k, n - 1));
    const double min_cell = cell.minCoeff();
    std::vector<double> best;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = cell_of(pts[i]);
        best.clear();
        for (int ring = 0; ring <= per_axis; ++ring) {
            for (int z = c[2] - ring; z <= c[2] + ring; ++z)
                for (int y = c[1] - ring; y <= c[1] + ring; ++y)
                    for (int x = c[0] - ring; x <= c[0] + ring; ++x) {
                        if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != ring) continue;
                        if (x < 0 || y < 0 || z < 0 || x >= per_axis || y >= per_axis || z >= per_axis) continue;
                        for (std::size_t j : grid[flat(x, y, z)])
                            if (j != i) best.push_back((pts[j] - pts[i]).norm());
                    }
            // Anything outside the searched block is at least ring * min_cell away.
            if (static_cast<int>(best.size()) >= want) {
                std::nth_element(best.begin(), best.begin() + (want - 1), best.end());
                if (best[want - 1] <= ring * min_cell) break;
            }
        }
        std::partial_sort(best.begin(), best.begin() + want, best.end());
        out[i] = std::accumulate(best.begin(), best.begin() + want, 0.0) / want;
    }
    return out;
}

/// Initial cloud from SfM points: isotropic scales from the 3-NN distance,
/// identity rotations, opacity 0.1, band-0 color from the point color.
template <typename T = float>
GaussianCloud<T> seed_from_sfm(const std::vector<SfmPoint>& points, double keep_fraction) {
    const auto kept = select_sfm_points(points, keep_fraction);
    std::vector<Vec3<double>> xyz;
    xyz.reserve(kept.size());
    for (auto i : kept) xyz.push_back(points[i].xyz);
    const auto dist = mean_knn_distance(xyz, 3);
    GaussianCloud<T> cloud;
    std::vector<T> sh(kShFloats, T(0));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const auto& p = points[kept[j]];
        for (int c = 0; c < 3; ++c) sh[c] = static_cast<T>((p.rgb[c] - 0.5) / kShC0);
        const double d = kept.size() > 1 ? std::max(dist[j], 1e-7) : 0.01;
        const T ls = static_cast<T>(std::log(d));
        cloud.push_back(xyz[j].cast<T>(), Vec3<T>(ls, ls, ls), {1, 0, 0, 0}, static_cast<T>(logit(kSeedOpacity)), sh);
    }
    return cloud;
}

struct PhaseActions {
    bool standard_densify = false;
    bool late_densify = false;
    bool mask_prune = false;
    bool significance_prune = false;
    int significance_event = -1;  // index into Timeline::significance_events
    bool sh_full_update = false;
    bool progressive_scale_active = false;

    bool operator==(const PhaseActions&) const = default;
};

inline PhaseActions phase_at(int i, const Timeline& t) {
    if (i < 0 || i >= t.total_iters) throw ContractError("phase_at: iteration outside [0, total_iters)");
    PhaseActions a;
    a.standard_densify = i > t.densify_from && i <= t.densify_until && i % t.densify_interval == 0;
    a.late_densify = t.in_late_window(i) && i % t.late_densify_interval == 0;
    a.mask_prune = i > t.densify_until && i % t.mask_prune_interval == 0 && !t.in_late_window(i);
    for (std::size_t k = 0; k < t.significance_events.size(); ++k)
        if (t.significance_events[k] == i) {
            a.significance_prune = true;
            a.significance_event = static_cast<int>(k);
            break;
        }
    a.sh_full_update = i % t.sh_cadence == 0;
    a.progressive_scale_active = i < t.progressive_scale_until;
    return a;
}

}  // namespace csplat
