// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"
#include "csplat/config.hpp"
#include "csplat/image.hpp"
#include "csplat/io/compact.hpp"
#include "csplat/mask.hpp"
#include "csplat/metrics.hpp"
#include "csplat/raster.hpp"
#include "csplat/sched.hpp"
#include "csplat/signif.hpp"

namespace csplat {

struct TrainView {
    Camera camera;
    Image<float> image;  // full resolution, RGB in [0, 1]
    std::string name;
};

struct TrainScene {
    std::vector<TrainView> views;
    std::vector<SfmPoint> points;
};

// ---- loss ----

struct LossTerms {
    double l1 = 0;
    double dssim = 0;   // (1 - SSIM) / 2
    double mask_m = 0;  // L_m, 0 when Gaussian masking is off
    double mask_sh = 0; // L_sh, 0 when SH masking is off
    double total = 0;
};

template <typename T>
struct LossOutput {
    LossTerms terms;
    Image<T> d_image;  // dL/d(render)
};

/// (1 - l) L1 + l L_dssim + lambda_m L_m + lambda_sh L_sh. Mask terms count only
/// for enabled mask tricks; their parameter gradients come from mask_losses_backward.
template <typename T>
LossOutput<T> total_loss(const Image<T>& render, const Image<T>& target, const GaussianParams<T>& params,
                         const TrainConfig& cfg, int threads = 1) {
    if (!render.same_shape(target)) throw ContractError("total_loss: render and target resolutions differ");
    LossOutput<T> out;
    const double lam = cfg.lambda_ssim;
    const std::size_t n = render.data.size();
    double l1 = 0;
    for (std::size_t k = 0; k < n; ++k) l1 += std::abs(static_cast<double>(render.data[k]) - target.data[k]);
    out.terms.l1 = l1 / static_cast<double>(n);

    out.d_image = Image<T>(render.width, render.height, render.channels);
    const auto ssim = ssim_fast(render, target, SsimParams{}, lam != 0, threads);
    out.terms.dssim = (1.0 - ssim.value) / 2.0;
    const double g1 = (1.0 - lam) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double diff = static_cast<double>(render.data[k]) - target.data[k];
        double g = diff > 0 ? g1 : diff < 0 ? -g1 : 0.0;
        if (lam != 0) g -= 0.5 * lam * ssim.grad.data[k];
        out.d_image.data[k] = static_cast<T>(g);
    }
    const auto ml = mask_losses(params);
    if (cfg.tricks.gaussian_mask) out.terms.mask_m = ml.gaussian;
    if (cfg.tricks.sh_mask) out.terms.mask_sh = ml.sh;
    out.terms.total = (1.0 - lam) * out.terms.l1 + lam * out.terms.dssim + cfg.lambda_m * out.terms.mask_m +
                      cfg.lambda_sh * out.terms.mask_sh;
    return out;
}

// ---- optimizer ----

enum ParamGroup { kGroupPosition, kGroupScale, kGroupRotation, kGroupOpacity, kGroupShDc, kGroupShRest, kGroupMask,
                  kGroupShMask, kGroupCount };

using GroupValues = std::array<double, kGroupCount>;
using GroupFlags = std::array<bool, kGroupCount>;

/// Adam moments laid out like the parameters, one row per Gaussian.
template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
    GaussianParams<T> m, v;
    std::array<long, kGroupCount> steps{};

    std::size_t size() const { return m.size(); }
    void resize(std::size_t n) {
        m.resize(n);
        v.resize(n);
    }
    void compact(const std::vector<bool>& keep) {
        m.compact(keep);
        v.compact(keep);
    }
    void append_zero_rows(std::size_t n) {
        m.append_zero_rows(n);
        v.append_zero_rows(n);
    }

    /// One update of every active group; inactive groups keep params and moments.
    void step(GaussianParams<T>& p, const GaussianParams<T>& g, const GroupValues& lr, const GroupFlags& active) {
        if (p.size() != m.size() || g.size() != m.size()) throw ContractError("adam: row count mismatch");
        GroupFlags run{};
        for (int k = 0; k < kGroupCount; ++k) {
            run[k] = active[k] && lr[k] > 0;
            if (run[k]) ++steps[k];
        }
        auto update = [&](std::vector<T>& x, const std::vector<T>& gx, std::vector<T>& mx, std::vector<T>& vx, int group,
                          std::size_t k) {
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps[group]));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps[group]));
            const double gk = gx[k];
            const double mk = beta1 * mx[k] + (1 - beta1) * gk;
            const double vk = beta2 * vx[k] + (1 - beta2) * gk * gk;
            mx[k] = static_cast<T>(mk);
            vx[k] = static_cast<T>(vk);
            x[k] = static_cast<T>(x[k] - lr[group] * (mk / c1) / (std::sqrt(vk / c2) + eps));
        };
        auto field = [&](std::vector<T>& x, const std::vector<T>& gx, std::vector<T>& mx, std::vector<T>& vx, int group) {
            if (!run[group]) return;
            for (std::size_t k = 0; k < x.size(); ++k) update(x, gx, mx, vx, group, k);
        };
        field(p.positions, g.positions, m.positions, v.positions, kGroupPosition);
        field(p.log_scales, g.log_scales, m.log_scales, v.log_scales, kGroupScale);
        field(p.rotations, g.rotations, m.rotations, v.rotations, kGroupRotation);
        field(p.opacity_logits, g.opacity_logits, m.opacity_logits, v.opacity_logits, kGroupOpacity);
        field(p.mask_logits, g.mask_logits, m.mask_logits, v.mask_logits, kGroupMask);
        field(p.sh_mask_logits, g.sh_mask_logits, m.sh_mask_logits, v.sh_mask_logits, kGroupShMask);
        if (run[kGroupShDc] || run[kGroupShRest])
            for (std::size_t k = 0; k < p.sh.size(); ++k) {
                const int group = k % kShFloats < 3 ? kGroupShDc : kGroupShRest;
                if (run[group]) update(p.sh, g.sh, m.sh, v.sh, group, k);
            }
    }
};

/// Position learning rate: log-linear from lr.position to lr.position_final
/// (both times the scene extent) over the run.
inline double position_lr_at(int i, int total, const LearningRates& lr, double extent) {
    const double t = total > 1 ? std::clamp(static_cast<double>(i) / (total - 1), 0.0, 1.0) : 1.0;
    if (lr.position <= 0 || lr.position_final <= 0) return lr.position * extent;
    return extent * std::exp(std::log(lr.position) * (1 - t) + std::log(lr.position_final) * t);
}

// ---- densification ----

/// Accumulated screen-space gradient norms since the last densification.
struct DensifyStats {
    std::vector<double> grad_accum;
    std::vector<std::uint32_t> count;
    std::vector<double> footprint;  // largest screen area seen, in units of 9*pi*s

    std::size_t size() const { return count.size(); }
    void resize(std::size_t n) {
        grad_accum.assign(n, 0.0);
        count.assign(n, 0);
        footprint.assign(n, 0.0);
    }
    void reset() { resize(size()); }
    void compact(const std::vector<bool>& keep) {
        std::size_t out = 0;
        for (std::size_t i = 0; i < keep.size(); ++i)
            if (keep[i]) {
                grad_accum[out] = grad_accum[i];
                count[out] = count[i];
                footprint[out] = footprint[i];
                ++out;
            }
        grad_accum.resize(out);
        count.resize(out);
        footprint.resize(out);
    }
    void append_zero_rows(std::size_t n) {
        grad_accum.resize(grad_accum.size() + n, 0.0);
        count.resize(count.size() + n, 0);
        footprint.resize(footprint.size() + n, 0.0);
    }
    double mean(std::size_t i) const { return count[i] ? grad_accum[i] / count[i] : 0.0; }
};

struct DensifyOptions {
    double grad_threshold = 0.0002;
    double percent_dense = 0.01;
    double min_opacity = 0.005;
    double scene_extent = 1;
    int split_children = 2;
    // Splits of Gaussians whose footprint exceeds large_footprint use
    // large_split_children instead (0 disables).
    int large_split_children = 0;
    double large_footprint = 4.0;
};

struct DensifyCounts {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Clone small / split large Gaussians whose mean screen-space gradient reaches
/// the threshold, then drop those with opacity below min_opacity. Clones copy
/// every attribute including masks; split children get scales divided by
/// 0.8 * children, positions sampled from the parent and masks reset.
template <typename T>
DensifyCounts densify(GaussianCloud<T>& cloud, AdamState<T>& adam, DensifyStats& stats, const DensifyOptions& o,
                      std::mt19937_64& rng) {
    const std::size_t n = cloud.size();
    if (adam.size() != n || stats.size() != n) throw ContractError("densify: optimizer or statistics rows out of sync");
    DensifyCounts counts;
    std::vector<char> clone(n, 0), split(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(stats.mean(i) >= o.grad_threshold)) continue;
        const T max_scale = cloud.log_scale(i).array().exp().maxCoeff();
        if (max_scale <= o.percent_dense * o.scene_extent)
            clone[i] = 1;
        else
            split[i] = 1;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (clone[i]) {
            cloud.append_row(cloud, i);
            ++counts.cloned;
        }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) continue;
        const int children =
            o.large_split_children > 0 && stats.footprint[i] > o.large_footprint ? o.large_split_children : o.split_children;
        const T shrink = static_cast<T>(std::log(0.8 * children));
        const Vec3<T> scale = cloud.log_scale(i).array().exp().matrix();
        const Mat3<T> r = quat_to_rotation<T>(cloud.rotation(i));
        for (int c = 0; c < children; ++c) {
            cloud.append_row(cloud, i);
            const std::size_t j = cloud.size() - 1;
            const Vec3<T> z(static_cast<T>(normal(rng)), static_cast<T>(normal(rng)), static_cast<T>(normal(rng)));
            const Vec3<T> offset = r * scale.cwiseProduct(z);
            for (int k = 0; k < 3; ++k) {
                cloud.params.positions[3 * j + k] += offset[k];
                cloud.params.log_scales[3 * j + k] -= shrink;
            }
            cloud.params.mask_logits[j] = T(kInitialMaskLogit);
            for (int l = 0; l < 3; ++l) cloud.params.sh_mask_logits[3 * j + l] = T(kInitialMaskLogit);
        }
        ++counts.split;
    }
    const std::size_t added = cloud.size() - n;
    adam.append_zero_rows(added);
    stats.append_zero_rows(added);

    std::vector<bool> keep(cloud.size(), true);
    for (std::size_t i = 0; i < n; ++i)
        if (split[i]) keep[i] = false;
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (keep[i] && cloud.opacity(i) < T(o.min_opacity)) {
            keep[i] = false;
            ++counts.pruned;
        }
    if (std::find(keep.begin(), keep.end(), true) == keep.end()) {
        // Never empty the scene on opacity alone; keep the split results.
        for (std::size_t i = 0; i < cloud.size(); ++i) keep[i] = i >= n || !split[i];
        counts.pruned = 0;
    }
    cloud.compact(keep);
    adam.compact(keep);
    stats.compact(keep);
    stats.reset();
    return counts;
}

// ---- training loop ----

struct IterationMetrics {
    int iteration = 0;
    LossTerms loss;
    double psnr = 0;
    std::size_t gaussians = 0;
    int width = 0;
    int height = 0;
    double blur_sigma = 0;  // 0 when blurring is off
    double lowpass = 0;
};

inline void write_metrics_header(std::ostream& os) {
    os << "iteration,loss,l1,dssim,mask_m,mask_sh,psnr,gaussians,width,height,blur_sigma,lowpass\n";
}

inline void write_metrics_row(std::ostream& os, const IterationMetrics& m) {
    std::ostringstream line;
    line.precision(10);
    line << m.iteration << ',' << m.loss.total << ',' << m.loss.l1 << ',' << m.loss.dssim << ',' << m.loss.mask_m << ','
         << m.loss.mask_sh << ',' << m.psnr << ',' << m.gaussians << ',' << m.width << ',' << m.height << ','
         << m.blur_sigma << ',' << m.lowpass << '\n';
    os << line.str();
}

template <typename T>
struct TrainState {
    int iteration = 0;
    Timeline timeline;
    GaussianCloud<T> cloud;
    AdamState<T> adam;
    DensifyStats stats;
    double scene_extent = 1;
    std::size_t peak_count = 0;
    std::mt19937_64 rng;
    std::vector<IterationMetrics> log;

    void check_rows() const {
        if (adam.size() != cloud.size() || stats.size() != cloud.size())
            throw ContractError("train state: optimizer or statistics rows differ from the Gaussian count");
    }
};

/// Radius of the bounding sphere (centroid, farthest point) of the SfM points.
inline double sfm_scene_extent(const std::vector<SfmPoint>& points) {
    if (points.empty()) throw InputError("scene extent: no SfM points");
    Vec3<double> c = Vec3<double>::Zero();
    for (const auto& p : points) c += p.xyz;
    c /= static_cast<double>(points.size());
    double r = 0;
    for (const auto& p : points) r = std::max(r, (p.xyz - c).norm());
    return r > 0 ? r : 1.0;
}

template <typename T = float>
TrainState<T> init_train_state(const std::vector<SfmPoint>& points, const TrainConfig& cfg) {
    cfg.validate();
    TrainState<T> s;
    s.timeline = cfg.effective_timeline();
    const double keep = cfg.tricks.progressive_scale ? cfg.sfm_keep : 1.0;
    s.cloud = seed_from_sfm<T>(points, keep);
    s.adam.resize(s.cloud.size());
    s.stats.resize(s.cloud.size());
    s.scene_extent = sfm_scene_extent(points);
    s.peak_count = s.cloud.size();
    s.rng.seed(cfg.seed);
    return s;
}

/// Schedule values in force at iteration i for a full-resolution view.
struct StepSchedule {
    int width = 0;
    int height = 0;
    BlurSpec blur;
    double lowpass = kLowpassFloor;
    int sh_degree = kMaxShDegree;
};

inline StepSchedule schedule_at(int i, int full_w, int full_h, std::size_t n, const TrainConfig& cfg, const Timeline& t) {
    StepSchedule s;
    s.width = full_w;
    s.height = full_h;
    if (cfg.tricks.downsample) {
        s.width = resolution_at(i, start_resolution(full_w, cfg.downsample), full_w, t.progressive_end, cfg.resolution_mode);
        s.height = resolution_at(i, start_resolution(full_h, cfg.downsample), full_h, t.progressive_end, cfg.resolution_mode);
    }
    if (cfg.tricks.blur) {
        const double factor = static_cast<double>(full_w) / s.width;
        s.blur = blur_at(i, BlurSpec{cfg.blur_kernel, cfg.blur_sigma}, t.blur_step, cfg.effective_blur_decay(),
                         t.progressive_end, factor);
    }
    if (cfg.tricks.progressive_scale && i < t.progressive_scale_until && n > 0) s.lowpass = lowpass_s_at(n, s.height, s.width);
    if (cfg.sh_degree_interval > 0) s.sh_degree = std::min(kMaxShDegree, i / cfg.sh_degree_interval);
    return s;
}

inline RenderSettings train_render_settings(const TrainConfig& cfg, const StepSchedule& sched) {
    RenderSettings rs;
    rs.lowpass = sched.lowpass;
    rs.sh_degree = sched.sh_degree;
    rs.background = cfg.background;
    rs.tile_size = cfg.tile_size;
    rs.gaussian_mask = cfg.tricks.gaussian_mask;
    rs.mask_threshold = cfg.eps_m;
    rs.sh_mask = cfg.tricks.sh_mask;
    rs.sh_mask_threshold = cfg.eps_sh;
    rs.threads = cfg.threads;
    return rs;
}

template <typename T>
Image<T> clamp01(Image<T> img) {
    for (auto& v : img.data) v = std::clamp(v, T(0), T(1));
    return img;
}

/// One optimization step on `view` followed by the phase actions of the
/// timeline. `cameras` (full resolution) are used for significance scoring.
template <typename T>
IterationMetrics train_step(TrainState<T>& st, const TrainView& view, const TrainConfig& cfg,
                            const std::vector<Camera>& cameras) {
    const Timeline& t = st.timeline;
    const int i = st.iteration;
    if (i >= t.total_iters) throw ContractError("train_step: training already finished");
    st.check_rows();
    const PhaseActions ph = phase_at(i, t);
    const int full_w = view.image.width, full_h = view.image.height;
    const StepSchedule sched = schedule_at(i, full_w, full_h, st.cloud.size(), cfg, t);
    const Camera cam = view.camera.resized(sched.width, sched.height);
    Image<T> target = resize_area(view.image.template cast<T>(), sched.width, sched.height);
    if (sched.blur.enabled()) target = gaussian_blur(target, sched.blur.kernel_size, sched.blur.sigma);

    const RenderSettings rs = train_render_settings(cfg, sched);
    const auto fwd = render_forward(st.cloud, cam, rs);
    const auto loss = total_loss(fwd.image, target, st.cloud.params, cfg, cfg.threads);
    auto snapshot = [&](const std::string& what) {
        std::ostringstream os;
        os << what << " at iteration " << i << " (view " << view.name << ", " << st.cloud.size() << " Gaussians, "
           << sched.width << "x" << sched.height << ", l1=" << loss.terms.l1 << ", dssim=" << loss.terms.dssim
           << ", mask_m=" << loss.terms.mask_m << ", mask_sh=" << loss.terms.mask_sh << ")";
        return os.str();
    };
    if (!std::isfinite(loss.terms.total)) throw NumericError(snapshot("non-finite loss"));

    const bool sh_full = !cfg.tricks.accelerated || ph.sh_full_update;
    auto grad = render_backward(st.cloud, cam, rs, fwd, loss.d_image, sh_full);
    mask_losses_backward(st.cloud.params, cfg.tricks.gaussian_mask ? cfg.lambda_m : 0.0,
                         cfg.tricks.sh_mask ? cfg.lambda_sh : 0.0, grad.params);
    if (!grad.all_finite()) throw NumericError(snapshot("non-finite gradient"));

    // Screen-space gradient in normalized device units, as in 3DGS.
    for (std::size_t g = 0; g < st.cloud.size(); ++g) {
        if (!fwd.splats[g].visible) continue;
        const double gx = grad.mean2d[2 * g] * 0.5 * sched.width, gy = grad.mean2d[2 * g + 1] * 0.5 * sched.height;
        st.stats.grad_accum[g] += std::sqrt(gx * gx + gy * gy);
        ++st.stats.count[g];
        const double area_ratio = std::sqrt(static_cast<double>(fwd.splats[g].cov.determinant())) / sched.lowpass;
        st.stats.footprint[g] = std::max(st.stats.footprint[g], area_ratio);
    }

    GroupValues lr{position_lr_at(i, t.total_iters, cfg.lr, st.scene_extent), cfg.lr.scale, cfg.lr.rotation,
                   cfg.lr.opacity, cfg.lr.sh_dc, cfg.lr.sh_rest, cfg.lr.mask, cfg.lr.sh_mask};
    GroupFlags active;
    active.fill(true);
    active[kGroupShRest] = sh_full;
    active[kGroupMask] = cfg.tricks.gaussian_mask;
    active[kGroupShMask] = cfg.tricks.sh_mask;
    st.adam.step(st.cloud.params, grad.params, lr, active);

    IterationMetrics m;
    m.iteration = i;
    m.loss = loss.terms;
    m.psnr = psnr(clamp01(fwd.image), target);
    m.width = sched.width;
    m.height = sched.height;
    m.blur_sigma = sched.blur.enabled() ? sched.blur.sigma : 0.0;
    m.lowpass = sched.lowpass;

    // Phase actions.
    const T eps_m = static_cast<T>(cfg.eps_m);
    DensifyOptions dopt;
    dopt.grad_threshold = cfg.densify_grad_threshold;
    dopt.percent_dense = cfg.percent_dense;
    dopt.min_opacity = cfg.min_opacity;
    dopt.scene_extent = st.scene_extent;
    if (cfg.tricks.progressive_scale && ph.progressive_scale_active) dopt.large_split_children = 4;
    const bool densify_now = ph.standard_densify || (cfg.tricks.late_densify && ph.late_densify);
    if (densify_now) {
        densify(st.cloud, st.adam, st.stats, dopt, st.rng);
        st.peak_count = std::max(st.peak_count, st.cloud.size());
        if (cfg.tricks.gaussian_mask) prune_by_mask(st.cloud, eps_m, st.adam, st.stats);
    }
    if (cfg.tricks.gaussian_mask && ph.mask_prune) prune_by_mask(st.cloud, eps_m, st.adam, st.stats);
    if (cfg.tricks.significance && ph.significance_prune) {
        std::vector<Camera> cams;
        cams.reserve(cameras.size());
        for (const auto& c : cameras) {
            const auto s = schedule_at(i, c.width, c.height, st.cloud.size(), cfg, t);
            cams.push_back(c.resized(s.width, s.height));
        }
        const auto hits = count_hits(st.cloud, cams, rs);
        const auto report = significance_scores(hits, st.cloud, cfg.signif_beta, i);
        const double rate = prune_schedule(ph.significance_event, cfg.signif_first_rate, cfg.signif_decay,
                                           static_cast<int>(t.significance_events.size()));
        prune_by_significance(st.cloud, report.score, rate, st.adam, st.stats);
    }
    if (cfg.opacity_reset && i > 0 && i <= t.densify_until && i % cfg.opacity_reset_interval == 0) {
        const T cap = static_cast<T>(logit(0.01));
        for (auto& o : st.cloud.params.opacity_logits) o = std::min(o, cap);
        std::fill(st.adam.m.opacity_logits.begin(), st.adam.m.opacity_logits.end(), T(0));
        std::fill(st.adam.v.opacity_logits.begin(), st.adam.v.opacity_logits.end(), T(0));
    }
    st.check_rows();
    st.peak_count = std::max(st.peak_count, st.cloud.size());
    m.gaussians = st.cloud.size();
    st.log.push_back(m);
    ++st.iteration;
    return m;
}

/// Every 8th view (index 0, 8, 16, ...) is held out when `holdout` is set.
inline void split_views(std::size_t count, bool holdout, std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    train.clear();
    test.clear();
    for (std::size_t k = 0; k < count; ++k) (holdout && k % 8 == 0 ? test : train).push_back(k);
}

struct EvalResult {
    double psnr = 0;
    double ssim = 0;
    std::size_t views = 0;
};

/// Mean PSNR/SSIM of clamped full-resolution renders (masks not applied).
template <typename T>
EvalResult evaluate(const GaussianCloud<T>& cloud, const std::vector<TrainView>& views, const std::vector<std::size_t>& which,
                    const TrainConfig& cfg) {
    EvalResult r;
    if (which.empty()) return r;
    RenderSettings rs;
    rs.background = cfg.background;
    rs.tile_size = cfg.tile_size;
    rs.threads = cfg.threads;
    for (auto k : which) {
        const auto img = clamp01(render_forward(cloud, views[k].camera, rs).image);
        const auto target = views[k].image.template cast<T>();
        r.psnr += psnr(img, target);
        r.ssim += ssim_fast(img, target, SsimParams{}, false, cfg.threads).value;
    }
    r.views = which.size();
    r.psnr /= static_cast<double>(r.views);
    r.ssim /= static_cast<double>(r.views);
    return r;
}

struct FitReport {
    EvalResult train;
    EvalResult test;
    std::size_t initial_count = 0;
    std::size_t peak_count = 0;
    std::size_t final_count = 0;
    std::size_t compact_bytes = 0;
    std::array<std::uint32_t, 4> buckets{};
    double wall_seconds = 0;
    int iterations = 0;
};

struct FitResult {
    GaussianCloud<float> cloud;  // decoded from the compact bytes
    std::vector<std::uint8_t> compact;
    FitReport report;
    std::vector<IterationMetrics> log;
};

using ProgressFn = std::function<void(const IterationMetrics&)>;

/// Full training run: seeds from SfM, trains over shuffled views, then prunes
/// masked Gaussians, strips masked SH bands, encodes the 16-bit compact scene
/// and evaluates the decoded result.
inline FitResult fit(const TrainScene& scene, const TrainConfig& cfg, const ProgressFn& progress = {}) {
    const auto start = std::chrono::steady_clock::now();
    if (scene.views.empty()) throw InputError("fit: no views");
    std::vector<std::size_t> train_ids, test_ids;
    split_views(scene.views.size(), cfg.holdout, train_ids, test_ids);
    if (train_ids.size() < 2) throw InputError("fit: need at least two training views");
    for (const auto& v : scene.views) {
        v.camera.validate();
        if (v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels != 3)
            throw InputError("fit: image " + v.name + " does not match its camera");
    }

    auto st = init_train_state<float>(scene.points, cfg);
    FitResult out;
    out.report.initial_count = st.cloud.size();
    std::vector<Camera> cameras;
    for (auto k : train_ids) cameras.push_back(scene.views[k].camera);

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::mt19937_64 view_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    while (st.iteration < st.timeline.total_iters) {
        if (cursor == order.size()) {
            order = train_ids;
            std::shuffle(order.begin(), order.end(), view_rng);
            cursor = 0;
        }
        const auto m = train_step(st, scene.views[order[cursor++]], cfg, cameras);
        if (progress) progress(m);
    }

    if (cfg.tricks.gaussian_mask) prune_by_mask(st.cloud, static_cast<float>(cfg.eps_m), st.adam, st.stats);
    if (cfg.tricks.sh_mask) strip_sh_bands(st.cloud, static_cast<float>(cfg.eps_sh));
    out.compact = encode_compact(st.cloud);
    out.cloud = decode_compact<float>(out.compact);

    auto& r = out.report;
    r.peak_count = st.peak_count;
    r.final_count = out.cloud.size();
    r.compact_bytes = out.compact.size();
    r.buckets = bucket_histogram(out.cloud);
    r.iterations = st.iteration;
    r.train = evaluate(out.cloud, scene.views, train_ids, cfg);
    r.test = evaluate(out.cloud, scene.views, test_ids, cfg);
    out.log = std::move(st.log);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace csplat
