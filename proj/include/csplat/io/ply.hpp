// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// Binary little-endian PLY in the common Gaussian-splatting vertex layout:
// x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3.
// f_rest is channel-major (all red coefficients first).

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"
#include "csplat/io/compact.hpp"

namespace csplat {

inline std::vector<std::string> ply_property_names(int rest_coeffs = kShCoeffs - 1) {
    std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int k = 0; k < 3 * rest_coeffs; ++k) names.push_back("f_rest_" + std::to_string(k));
    names.push_back("opacity");
    for (int k = 0; k < 3; ++k) names.push_back("scale_" + std::to_string(k));
    for (int k = 0; k < 4; ++k) names.push_back("rot_" + std::to_string(k));
    return names;
}

inline constexpr int kPlyFloatsPerVertex = 62;

template <typename T>
std::vector<std::uint8_t> encode_ply(const GaussianCloud<T>& cloud) {
    cloud.validate();
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
    for (const auto& name : ply_property_names()) header << "property float " << name << "\n";
    header << "end_header\n";
    const std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + cloud.size() * kPlyFloatsPerVertex * 4);
    const auto& p = cloud.params;
    auto f = [&](T v) { detail::put<float>(out, static_cast<float>(v)); };
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) f(p.positions[3 * i + k]);
        for (int k = 0; k < 3; ++k) f(T(0));
        const auto sh = cloud.sh(i);
        for (int c = 0; c < 3; ++c) f(sh[c]);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < kShCoeffs; ++k) f(k < sh_coeffs_for_degree(cloud.sh_bands[i]) ? sh[3 * k + c] : T(0));
        f(p.opacity_logits[i]);
        for (int k = 0; k < 3; ++k) f(p.log_scales[3 * i + k]);
        for (int k = 0; k < 4; ++k) f(p.rotations[4 * i + k]);
    }
    return out;
}

/// Reads the layout written by encode_ply. Files with fewer f_rest properties
/// (SH degree 0, 1 or 2 exports) are accepted and padded with zeros.
template <typename T = float>
GaussianCloud<T> decode_ply(const std::vector<std::uint8_t>& in) {
    const std::string end_marker = "end_header\n";
    const std::string text(in.begin(), in.begin() + std::min<std::size_t>(in.size(), 1 << 16));
    const auto end = text.find(end_marker);
    if (text.rfind("ply\n", 0) != 0 || end == std::string::npos) throw FormatError("ply: missing header");
    std::istringstream hs(text.substr(0, end));
    std::string line;
    std::size_t n = 0;
    bool have_vertex = false, binary_le = false;
    std::vector<std::string> props;
    while (std::getline(hs, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (kw == "element") {
            std::string name;
            ls >> name >> n;
            if (name != "vertex" || have_vertex) throw FormatError("ply: only a single vertex element is supported");
            have_vertex = true;
        } else if (kw == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float" && type != "float32") throw FormatError("ply: property " + name + " is not float");
            props.push_back(name);
        } else if (kw != "ply" && kw != "comment" && kw != "obj_info" && !kw.empty()) {
            throw FormatError("ply: unexpected header line '" + line + "'");
        }
    }
    if (!binary_le) throw FormatError("ply: only binary_little_endian is supported");
    if (!have_vertex) throw FormatError("ply: no vertex element");
    int rest = -1;
    for (int deg = 0; deg <= kMaxShDegree; ++deg)
        if (props == ply_property_names(sh_coeffs_for_degree(deg) - 1)) rest = sh_coeffs_for_degree(deg) - 1;
    if (rest < 0) throw FormatError("ply: property list does not match the Gaussian layout");
    const std::size_t stride = props.size();
    std::size_t pos = end + end_marker.size();
    if (in.size() != pos + n * stride * 4) throw FormatError("ply: payload size does not match the vertex count");

    GaussianCloud<T> cloud;
    cloud.params.append_zero_rows(n);
    cloud.sh_bands.assign(n, static_cast<std::uint8_t>(kMaxShDegree));
    std::fill(cloud.params.mask_logits.begin(), cloud.params.mask_logits.end(), T(kInitialMaskLogit));
    std::fill(cloud.params.sh_mask_logits.begin(), cloud.params.sh_mask_logits.end(), T(kInitialMaskLogit));
    auto& p = cloud.params;
    auto f = [&]() { return static_cast<T>(detail::get<float>(in, pos)); };
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) p.positions[3 * i + k] = f();
        for (int k = 0; k < 3; ++k) f();
        auto sh = cloud.sh(i);
        for (int c = 0; c < 3; ++c) sh[c] = f();
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k <= rest; ++k) sh[3 * k + c] = f();
        p.opacity_logits[i] = f();
        for (int k = 0; k < 3; ++k) p.log_scales[3 * i + k] = f();
        for (int k = 0; k < 4; ++k) p.rotations[4 * i + k] = f();
    }
    return cloud;
}

template <typename T>
void save_ply(const GaussianCloud<T>& cloud, const std::filesystem::path& path) {
    const auto bytes = encode_ply(cloud);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename T = float>
GaussianCloud<T> load_ply(const std::filesystem::path& path) {
    return decode_ply<T>(read_file_bytes(path));
}

/// Bytes of the PLY vertex payload (header excluded).
inline std::size_t ply_payload_bytes(std::size_t n) { return n * kPlyFloatsPerVertex * 4; }

}  // namespace csplat
