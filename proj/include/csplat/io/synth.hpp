// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// Procedural multi-view scenes: random ground-truth Gaussians, cameras on a
// sphere around the origin, 8-bit targets and a noisy SfM-like point cloud.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/io/colmap.hpp"
#include "csplat/io/image_io.hpp"
#include "csplat/raster.hpp"
#include "csplat/train.hpp"

namespace csplat {

struct SynthPreset {
    std::string name;
    int gaussians = 3;
    int views = 8;
    int size = 64;
    double min_scale = 0.15;
    double max_scale = 0.35;
    double extent = 0.6;
    int points_per_gaussian = 20;
};

inline SynthPreset synth_preset(const std::string& name) {
    if (name == "small") return {"small", 3, 8, 64, 0.15, 0.35, 0.6, 20};
    if (name == "medium") return {"medium", 200, 16, 128, 0.03, 0.12, 1.0, 5};
    throw ConfigError("unknown synthetic preset '" + name + "' (expected small or medium)");
}

struct SynthScene {
    GaussianCloud<double> truth;
    SfmBundle bundle;
    std::vector<Image<float>> images;  // 8-bit quantized renders of `truth`, bundle image order
    TrainScene scene;                  // the same data as loaded back from disk
};

/// Scene contents as a reader would see them: cameras and points converted
/// through the COLMAP records.
inline TrainScene scene_from_bundle(const SfmBundle& b, const std::vector<Image<float>>& images) {
    if (images.size() != b.images.size()) throw InputError("scene: image count does not match the reconstruction");
    TrainScene s;
    for (std::size_t k = 0; k < b.images.size(); ++k) s.views.push_back({colmap_camera(b, b.images[k]), images[k], b.images[k].name});
    s.points = colmap_sfm_points(b);
    return s;
}

inline SynthScene make_synth_scene(const SynthPreset& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1), u01(0, 1);
    std::normal_distribution<double> normal(0, 1);
    SynthScene out;

    for (int g = 0; g < p.gaussians; ++g) {
        Vec3<double> pos;
        do pos = Vec3<double>(u(rng), u(rng), u(rng));
        while (pos.norm() > 1);
        pos *= p.extent;
        Vec3<double> ls;
        for (int k = 0; k < 3; ++k) ls[k] = std::log(p.min_scale + u01(rng) * (p.max_scale - p.min_scale));
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        std::vector<double> sh(kShFloats, 0.0);
        for (int c = 0; c < 3; ++c) sh[c] = (0.15 + 0.7 * u01(rng) - 0.5) / kShC0;
        for (int k = 3; k < 12; ++k) sh[k] = 0.08 * u(rng);  // mild view dependence in band 1
        out.truth.push_back(pos, ls, {q.w(), q.x(), q.y(), q.z()}, logit(0.6 + 0.35 * u01(rng)), sh);
    }

    const double focal = p.size / (2.0 * std::tan(0.5 * 45.0 * M_PI / 180.0));
    RenderSettings rs;
    for (int v = 0; v < p.views; ++v) {
        const double az = 2 * M_PI * v / p.views;
        const double el = (v % 2 == 0 ? 0.35 : -0.2);
        const Eigen::Vector3d eye = 4.0 * Eigen::Vector3d(std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az));
        const Camera cam = Camera::look_at(eye, Eigen::Vector3d::Zero(), {0, -1, 0}, focal, p.size, p.size);
        const std::string name = "view_" + std::string(v < 10 ? "0" : "") + std::to_string(v) + ".png";
        auto [ccam, cimg] = to_colmap(cam, v + 1, name);
        out.bundle.cameras[ccam.id] = ccam;
        out.bundle.images.push_back(cimg);
        auto img = render_forward(out.truth, colmap_camera(out.bundle, cimg), rs).image;
        quantize_8bit(img);
        out.images.push_back(img.cast<float>());
    }

    // Points scattered inside each Gaussian with position noise; the reported
    // error grows with the noise. Some uniform outliers carry large errors.
    std::uint64_t id = 1;
    auto color_byte = [](double v) { return to_byte(v); };
    for (std::size_t g = 0; g < out.truth.size(); ++g) {
        const Vec3<double> scale = out.truth.log_scale(g).array().exp().matrix();
        const Mat3<double> r = quat_to_rotation<double>(out.truth.rotation(g));
        const auto sh = out.truth.sh(g);
        for (int k = 0; k < p.points_per_gaussian; ++k) {
            Vec3<double> z(normal(rng), normal(rng), normal(rng));
            z = z.cwiseMax(-2.0).cwiseMin(2.0);
            const double noise_level = 0.02 + 0.1 * u01(rng);
            const Vec3<double> noise(noise_level * normal(rng), noise_level * normal(rng), noise_level * normal(rng));
            const Vec3<double> xyz = out.truth.position(g) + r * scale.cwiseProduct(z) + noise;
            ColmapPoint pt;
            pt.id = id++;
            pt.xyz = {xyz.x(), xyz.y(), xyz.z()};
            for (int c = 0; c < 3; ++c) pt.rgb[c] = color_byte(sh[c] * kShC0 + 0.5 + 0.03 * normal(rng));
            pt.error = noise.norm() * 10 + 0.05 * u01(rng);
            out.bundle.points.push_back(pt);
        }
    }
    const int outliers = std::max(1, static_cast<int>(out.truth.size() * p.points_per_gaussian / 10));
    for (int k = 0; k < outliers; ++k) {
        ColmapPoint pt;
        pt.id = id++;
        pt.xyz = {1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng)};
        for (int c = 0; c < 3; ++c) pt.rgb[c] = color_byte(u01(rng));
        pt.error = 2 + 2 * u01(rng);
        out.bundle.points.push_back(pt);
    }
    out.bundle.validate();
    out.scene = scene_from_bundle(out.bundle, out.images);
    return out;
}

/// Writes <dir>/images/*.png and <dir>/sparse/0/{cameras,images,points3D}.txt.
inline void write_synth_scene(const SynthScene& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    write_colmap_text(s.bundle, dir / "sparse" / "0");
    for (std::size_t k = 0; k < s.images.size(); ++k) write_png(s.images[k], dir / "images" / s.bundle.images[k].name);
}

}  // namespace csplat
