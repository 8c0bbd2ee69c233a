// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the test suites: random scenes, finite differences and
// brute-force reference renderers that never go through tile binning.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <random>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/geom.hpp"
#include "csplat/image.hpp"
#include "csplat/raster.hpp"

namespace csplat::testutil {

inline Camera front_camera(int w, int h, double distance = 4.0, double fov_deg = 40.0) {
    const double focal = w / (2.0 * std::tan(fov_deg * M_PI / 360.0));
    return Camera::look_at({0.3, -0.2, -distance}, {0, 0, 0}, {0, -1, 0}, focal, w, h);
}

inline std::array<double, 4> random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    std::array<double, 4> q{n(rng), n(rng), n(rng), n(rng)};
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& v : q) v /= norm;
    return q;
}

struct SceneOptions {
    double extent = 0.8;
    double min_scale = 0.08;
    double max_scale = 0.25;
    double min_alpha = 0.2;
    double max_alpha = 0.8;
    double sh_rest = 0.15;
};

inline GaussianCloud<double> random_cloud(std::size_t n, std::mt19937_64& rng, const SceneOptions& o = {}) {
    std::uniform_real_distribution<double> u(-1, 1), u01(0, 1);
    GaussianCloud<double> cloud;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3<double> pos(u(rng) * o.extent, u(rng) * o.extent, u(rng) * o.extent);
        Vec3<double> ls;
        for (int k = 0; k < 3; ++k) ls[k] = std::log(o.min_scale + u01(rng) * (o.max_scale - o.min_scale));
        const double alpha = o.min_alpha + u01(rng) * (o.max_alpha - o.min_alpha);
        std::vector<double> sh(kShFloats);
        for (int c = 0; c < 3; ++c) sh[c] = (0.2 + 0.6 * u01(rng) - 0.5) / kShC0;
        for (int k = 3; k < kShFloats; ++k) sh[k] = o.sh_rest * u(rng);
        cloud.push_back(pos, ls, random_quat(rng), logit(alpha), sh);
    }
    return cloud;
}

inline Image<double> random_image(int w, int h, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image<double> img(w, h, 3);
    for (auto& v : img.data) v = u(rng);
    return img;
}

inline double weighted_sum(const Image<double>& img, const Image<double>& weights) {
    double s = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * weights.data[i];
    return s;
}

/// Central difference of f with respect to *param.
inline double central_difference(double& param, double h, const std::function<double()>& f) {
    const double saved = param;
    param = saved + h;
    const double plus = f();
    param = saved - h;
    const double minus = f();
    param = saved;
    return (plus - minus) / (2 * h);
}

/// Relative error with an absolute floor for near-zero gradients.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Per-pixel reference renderer: loops every Gaussian at every pixel in global
/// depth order, with no tiles. Returns the image and per-Gaussian hit counts.
struct ReferenceRender {
    Image<double> image;
    std::vector<double> weight_sum;  // sum of blend weights per pixel
    std::vector<double> transmittance;
    std::vector<std::uint32_t> hits;
};

inline ReferenceRender reference_render(const GaussianCloud<double>& cloud, const Camera& cam,
                                        const RenderSettings& s) {
    const std::size_t n = cloud.size();
    struct Item {
        double depth;
        std::size_t index;
        Vec2<double> mean;
        Mat2<double> cov;
        double opacity;
        Vec3<double> color;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < n; ++i) {
        double gm = 1;
        if (s.gaussian_mask) gm = sigmoid(cloud.params.mask_logits[i]) > s.mask_threshold ? 1 : 0;
        if (gm == 0) continue;
        const Mat3<double> cov3 = covariance_from_scale<double>(cloud.log_scale(i).array().exp().matrix(), cloud.rotation(i));
        const auto p = project_gaussian<double>(cloud.position(i), cov3, cam, s.lowpass);
        if (!p) continue;
        BandMasks<double> bm{1, 1, 1};
        if (s.sh_mask)
            for (int l = 0; l < 3; ++l) bm[l] = sigmoid(cloud.params.sh_mask_logits[3 * i + l]) > s.sh_mask_threshold ? 1 : 0;
        const Vec3<double> v = cloud.position(i) - cam.center();
        const auto c = sh_to_color<double>(cloud.sh(i), v.normalized(), std::min<int>(s.sh_degree, cloud.sh_bands[i]), bm);
        items.push_back({p->depth, i, p->mean, p->cov, cloud.opacity(i), c.rgb});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });
    ReferenceRender out;
    out.image = Image<double>(cam.width, cam.height, 3);
    out.weight_sum.assign(out.image.pixel_count(), 0);
    out.transmittance.assign(out.image.pixel_count(), 1);
    out.hits.assign(n, 0);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Vec2<double> px(x + 0.5, y + 0.5);
            double t = 1;
            Vec3<double> c = Vec3<double>::Zero();
            double wsum = 0;
            for (const auto& it : items) {
                const Vec2<double> d = px - it.mean;
                const double maha = d.dot(it.cov.inverse() * d);
                if (maha > 9.0) continue;
                const double a = std::min(0.99, it.opacity * std::exp(-0.5 * maha));
                if (a < 1.0 / 255.0) continue;
                if (t * (1 - a) < 1e-4) break;
                c += it.color * a * t;
                wsum += a * t;
                ++out.hits[it.index];
                t *= 1 - a;
            }
            for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = c[ch] + t * s.background[ch];
            out.weight_sum[static_cast<std::size_t>(y) * cam.width + x] = wsum;
            out.transmittance[static_cast<std::size_t>(y) * cam.width + x] = t;
        }
    return out;
}


/// Max relative error per attribute class between the analytic rasterizer
/// gradient and central differences of L = sum(weights * image).
struct GradCheckResult {
    std::map<std::string, double> max_rel;
    std::size_t checked = 0;
};

inline GradCheckResult check_render_gradients(GaussianCloud<double> cloud, const Camera& cam, RenderSettings s,
                                              const Image<double>& weights, double h = 1e-4) {
    s.gaussian_mask = true;
    s.sh_mask = true;
    const auto fwd = render_forward(cloud, cam, s);
    const auto grad = render_backward(cloud, cam, s, fwd, weights, true);
    auto loss = [&] { return weighted_sum(render_forward(cloud, cam, s).image, weights); };
    GradCheckResult r;
    auto record = [&](const std::string& cls, double analytic, double numeric) {
        r.max_rel[cls] = std::max(r.max_rel[cls], relative_error(analytic, numeric));
        ++r.checked;
    };
    auto& p = cloud.params;
    const auto& g = grad.params;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            record("position", g.positions[3 * i + k], central_difference(p.positions[3 * i + k], h, loss));
            record("log_scale", g.log_scales[3 * i + k], central_difference(p.log_scales[3 * i + k], h, loss));
        }
        for (int k = 0; k < 4; ++k)
            record("rotation", g.rotations[4 * i + k], central_difference(p.rotations[4 * i + k], h, loss));
        record("opacity", g.opacity_logits[i], central_difference(p.opacity_logits[i], h, loss));
        for (int k = 0; k < kShFloats; ++k)
            record(k < 3 ? "sh_dc" : "sh_rest", g.sh[kShFloats * i + k], central_difference(p.sh[kShFloats * i + k], h, loss));

        // Gaussian mask: d/dM of rendering with opacity and scale multiplied by M,
        // evaluated at M = 1 by perturbing the underlying attributes.
        {
            const double o0 = p.opacity_logits[i];
            std::array<double, 3> ls0{p.log_scales[3 * i], p.log_scales[3 * i + 1], p.log_scales[3 * i + 2]};
            auto at = [&](double m) {
                p.opacity_logits[i] = logit(sigmoid(o0) * m);
                for (int k = 0; k < 3; ++k) p.log_scales[3 * i + k] = ls0[k] + std::log(m);
                const double v = loss();
                p.opacity_logits[i] = o0;
                for (int k = 0; k < 3; ++k) p.log_scales[3 * i + k] = ls0[k];
                return v;
            };
            const double d_m = (at(1 + h) - at(1 - h)) / (2 * h);
            record("gaussian_mask", g.mask_logits[i], d_m * sigmoid_grad(p.mask_logits[i]));
        }
        // SH band masks: scale one band's coefficients by M around the forward
        // value of the hard mask. A closed band is opened for the probe and
        // evaluated around M = 0, which is the straight-through surrogate.
        for (int l = 1; l <= 3; ++l) {
            auto sh = cloud.sh(i);
            std::vector<double> saved(sh.begin(), sh.end());
            double& band_logit = p.sh_mask_logits[3 * i + l - 1];
            const double logit0 = band_logit;
            const double m0 = sigmoid(logit0) > s.sh_mask_threshold ? 1.0 : 0.0;
            auto at = [&](double m) {
                band_logit = 20.0;
                for (int k = sh_band_begin(l); k < sh_band_begin(l + 1); ++k)
                    for (int c = 0; c < 3; ++c) sh[3 * k + c] = saved[3 * k + c] * m;
                const double v = loss();
                std::copy(saved.begin(), saved.end(), sh.begin());
                band_logit = logit0;
                return v;
            };
            const double d_m = (at(m0 + h) - at(m0 - h)) / (2 * h);
            record("sh_mask", g.sh_mask_logits[3 * i + l - 1], d_m * sigmoid_grad(p.sh_mask_logits[3 * i + l - 1]));
        }
    }
    return r;
}

}  // namespace csplat::testutil
