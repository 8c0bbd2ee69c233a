// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "csplat/io/colmap.hpp"
#include "csplat/io/image_io.hpp"
#include "csplat/io/synth.hpp"
#include "csplat/train.hpp"

namespace csplat {

/// Reconstruction directory inside a scene: sparse/0, sparse, or the scene root.
inline std::filesystem::path find_sparse_dir(const std::filesystem::path& scene) {
    for (const auto& cand : {scene / "sparse" / "0", scene / "sparse", scene}) {
        if (std::filesystem::is_directory(cand) &&
            (std::filesystem::exists(cand / "cameras.txt") || std::filesystem::exists(cand / "cameras.bin")))
            return cand;
    }
    throw InputError("no COLMAP reconstruction under " + scene.string());
}

/// Loads a scene directory (COLMAP reconstruction plus images/). Images whose
/// size differs from their camera are area-resampled to the camera size.
inline TrainScene load_scene_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InputError("scene directory not found: " + dir.string());
    const auto bundle = load_colmap(find_sparse_dir(dir));
    std::vector<Image<float>> images;
    for (const auto& img : bundle.images) {
        auto im = read_image<float>(dir / "images" / img.name);
        const auto& cam = bundle.cameras.at(img.camera_id);
        if (im.width != cam.width || im.height != cam.height) im = resize_area(im, cam.width, cam.height);
        images.push_back(std::move(im));
    }
    return scene_from_bundle(bundle, images);
}

}  // namespace csplat
