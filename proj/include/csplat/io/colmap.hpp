// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// COLMAP sparse reconstructions (cameras, images, points3D) in the text and
// binary layouts. Only PINHOLE and SIMPLE_PINHOLE cameras are accepted.

#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csplat/common.hpp"
#include "csplat/geom.hpp"
#include "csplat/io/compact.hpp"
#include "csplat/sched.hpp"

namespace csplat {

struct ColmapCamera {
    int id = 0;
    std::string model;  // "PINHOLE" or "SIMPLE_PINHOLE"
    int width = 0;
    int height = 0;
    std::vector<double> params;
    bool operator==(const ColmapCamera&) const = default;
};

struct ColmapKeypoint {
    double x = 0, y = 0;
    std::int64_t point3d_id = -1;
    bool operator==(const ColmapKeypoint&) const = default;
};

struct ColmapImage {
    int id = 0;
    std::array<double, 4> qvec{1, 0, 0, 0};  // world-to-camera rotation (w, x, y, z)
    std::array<double, 3> tvec{0, 0, 0};
    int camera_id = 0;
    std::string name;
    std::vector<ColmapKeypoint> keypoints;
    bool operator==(const ColmapImage&) const = default;
};

struct ColmapPoint {
    std::uint64_t id = 0;
    std::array<double, 3> xyz{0, 0, 0};
    std::array<std::uint8_t, 3> rgb{0, 0, 0};
    double error = 0;
    std::vector<std::pair<int, int>> track;  // (image id, keypoint index)
    bool operator==(const ColmapPoint&) const = default;
};

/// Parsed reconstruction. Images and points are ordered by id.
struct SfmBundle {
    std::map<int, ColmapCamera> cameras;
    std::vector<ColmapImage> images;
    std::vector<ColmapPoint> points;
    bool operator==(const SfmBundle&) const = default;

    void validate() const {
        for (const auto& img : images)
            if (!cameras.count(img.camera_id))
                throw FormatError("colmap: image " + img.name + " references missing camera " + std::to_string(img.camera_id));
        for (const auto& p : points)
            if (p.error < 0) throw FormatError("colmap: negative reprojection error");
    }
};

namespace colmap_detail {

inline constexpr int kSimplePinhole = 0;
inline constexpr int kPinhole = 1;

inline int model_id(const std::string& name) {
    if (name == "SIMPLE_PINHOLE") return kSimplePinhole;
    if (name == "PINHOLE") return kPinhole;
    throw FormatError("colmap: unsupported camera model " + name + " (only PINHOLE and SIMPLE_PINHOLE)");
}

inline std::string model_name(int id) {
    if (id == kSimplePinhole) return "SIMPLE_PINHOLE";
    if (id == kPinhole) return "PINHOLE";
    throw FormatError("colmap: unsupported camera model id " + std::to_string(id));
}

inline std::size_t param_count(int id) { return id == kSimplePinhole ? 3 : 4; }

inline std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem, bool& binary) {
    const auto bin = dir / (stem + ".bin"), txt = dir / (stem + ".txt");
    if (std::filesystem::exists(bin)) {
        binary = true;
        return bin;
    }
    if (std::filesystem::exists(txt)) {
        binary = false;
        return txt;
    }
    throw InputError("colmap: missing " + stem + ".txt/.bin in " + dir.string());
}

// Data lines of a text file, comments and blank lines skipped.
inline std::vector<std::string> data_lines(const std::filesystem::path& path, bool keep_blank = false) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') continue;
        if (line.find_first_not_of(" \t") == std::string::npos) {
            if (keep_blank) lines.push_back("");
            continue;
        }
        lines.push_back(line);
    }
    return lines;
}

[[noreturn]] inline void malformed(const std::filesystem::path& path, const std::string& line) {
    throw FormatError("colmap: malformed record in " + path.filename().string() + ": '" + line + "'");
}

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), bytes_(read_file_bytes(path)) {}
    template <typename U>
    U get() {
        if (pos_ + sizeof(U) > bytes_.size()) throw FormatError("colmap: truncated " + path_.filename().string());
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::string cstring() {
        std::string s;
        for (char c; (c = get<char>()) != '\0';) s.push_back(c);
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::filesystem::path path_;
    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline void check_params(const ColmapCamera& c) {
    if (c.params.size() != param_count(model_id(c.model)))
        throw FormatError("colmap: camera " + std::to_string(c.id) + " has the wrong number of parameters");
    if (c.width <= 0 || c.height <= 0) throw FormatError("colmap: camera " + std::to_string(c.id) + " has no size");
}

}  // namespace colmap_detail

inline std::map<int, ColmapCamera> read_colmap_cameras(const std::filesystem::path& path, bool binary) {
    using namespace colmap_detail;
    std::map<int, ColmapCamera> cams;
    if (binary) {
        Reader r(path);
        const auto n = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < n; ++k) {
            ColmapCamera c;
            c.id = r.get<std::int32_t>();
            const int model = r.get<std::int32_t>();
            c.model = model_name(model);
            c.width = static_cast<int>(r.get<std::uint64_t>());
            c.height = static_cast<int>(r.get<std::uint64_t>());
            for (std::size_t j = 0; j < param_count(model); ++j) c.params.push_back(r.get<double>());
            check_params(c);
            cams[c.id] = c;
        }
        if (!r.done()) throw FormatError("colmap: trailing bytes in " + path.string());
        return cams;
    }
    for (const auto& line : data_lines(path)) {
        std::istringstream ss(line);
        ColmapCamera c;
        if (!(ss >> c.id >> c.model >> c.width >> c.height)) malformed(path, line);
        model_id(c.model);
        for (double v; ss >> v;) c.params.push_back(v);
        if (!ss.eof()) malformed(path, line);
        check_params(c);
        cams[c.id] = c;
    }
    return cams;
}

inline std::vector<ColmapImage> read_colmap_images(const std::filesystem::path& path, bool binary) {
    using namespace colmap_detail;
    std::vector<ColmapImage> images;
    if (binary) {
        Reader r(path);
        const auto n = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < n; ++k) {
            ColmapImage img;
            img.id = r.get<std::int32_t>();
            for (auto& q : img.qvec) q = r.get<double>();
            for (auto& t : img.tvec) t = r.get<double>();
            img.camera_id = r.get<std::int32_t>();
            img.name = r.cstring();
            const auto np = r.get<std::uint64_t>();
            for (std::uint64_t j = 0; j < np; ++j) {
                ColmapKeypoint kp;
                kp.x = r.get<double>();
                kp.y = r.get<double>();
                kp.point3d_id = r.get<std::int64_t>();
                img.keypoints.push_back(kp);
            }
            images.push_back(std::move(img));
        }
        if (!r.done()) throw FormatError("colmap: trailing bytes in " + path.string());
    } else {
        // Two lines per image; the keypoint line may be empty.
        const auto lines = data_lines(path, true);
        // Blank lines only count when they sit in keypoint position.
        std::vector<std::string> recs;
        for (std::size_t i = 0; i < lines.size();) {
            if (lines[i].empty()) {
                ++i;
                continue;
            }
            recs.push_back(lines[i]);
            recs.push_back(i + 1 < lines.size() ? lines[i + 1] : "");
            i += 2;
        }
        for (std::size_t i = 0; i < recs.size(); i += 2) {
            std::istringstream ss(recs[i]);
            ColmapImage img;
            if (!(ss >> img.id >> img.qvec[0] >> img.qvec[1] >> img.qvec[2] >> img.qvec[3] >> img.tvec[0] >> img.tvec[1] >>
                  img.tvec[2] >> img.camera_id >> img.name))
                malformed(path, recs[i]);
            std::istringstream ks(recs[i + 1]);
            ColmapKeypoint kp;
            while (ks >> kp.x >> kp.y >> kp.point3d_id) img.keypoints.push_back(kp);
            if (!ks.eof()) malformed(path, recs[i + 1]);
            images.push_back(std::move(img));
        }
    }
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return images;
}

inline std::vector<ColmapPoint> read_colmap_points(const std::filesystem::path& path, bool binary) {
    using namespace colmap_detail;
    std::vector<ColmapPoint> points;
    if (binary) {
        Reader r(path);
        const auto n = r.get<std::uint64_t>();
        for (std::uint64_t k = 0; k < n; ++k) {
            ColmapPoint p;
            p.id = r.get<std::uint64_t>();
            for (auto& v : p.xyz) v = r.get<double>();
            for (auto& c : p.rgb) c = r.get<std::uint8_t>();
            p.error = r.get<double>();
            const auto len = r.get<std::uint64_t>();
            for (std::uint64_t j = 0; j < len; ++j) {
                const int image = r.get<std::int32_t>();
                const int kp = r.get<std::int32_t>();
                p.track.emplace_back(image, kp);
            }
            points.push_back(std::move(p));
        }
        if (!r.done()) throw FormatError("colmap: trailing bytes in " + path.string());
    } else {
        for (const auto& line : data_lines(path)) {
            std::istringstream ss(line);
            ColmapPoint p;
            int rgb[3];
            if (!(ss >> p.id >> p.xyz[0] >> p.xyz[1] >> p.xyz[2] >> rgb[0] >> rgb[1] >> rgb[2] >> p.error)) malformed(path, line);
            for (int c = 0; c < 3; ++c) {
                if (rgb[c] < 0 || rgb[c] > 255) malformed(path, line);
                p.rgb[c] = static_cast<std::uint8_t>(rgb[c]);
            }
            for (int image, kp; ss >> image >> kp;) p.track.emplace_back(image, kp);
            if (!ss.eof()) malformed(path, line);
            points.push_back(std::move(p));
        }
    }
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return points;
}

/// Reads cameras/images/points3D from `dir`, preferring .bin over .txt per file.
inline SfmBundle load_colmap(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InputError("colmap: not a directory: " + dir.string());
    SfmBundle b;
    bool bin = false;
    auto p = colmap_detail::find_file(dir, "cameras", bin);
    b.cameras = read_colmap_cameras(p, bin);
    p = colmap_detail::find_file(dir, "images", bin);
    b.images = read_colmap_images(p, bin);
    p = colmap_detail::find_file(dir, "points3D", bin);
    b.points = read_colmap_points(p, bin);
    b.validate();
    return b;
}

inline void write_colmap_text(const SfmBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream cams(dir / "cameras.txt"), imgs(dir / "images.txt"), pts(dir / "points3D.txt");
    if (!cams || !imgs || !pts) throw InputError("cannot write COLMAP files to " + dir.string());
    for (auto* f : {&cams, &imgs, &pts}) *f << std::setprecision(17);
    cams << "# CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
    for (const auto& [id, c] : b.cameras) {
        cams << id << ' ' << c.model << ' ' << c.width << ' ' << c.height;
        for (double v : c.params) cams << ' ' << v;
        cams << '\n';
    }
    imgs << "# IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n# POINTS2D[] as (X, Y, POINT3D_ID)\n";
    for (const auto& img : b.images) {
        imgs << img.id;
        for (double q : img.qvec) imgs << ' ' << q;
        for (double t : img.tvec) imgs << ' ' << t;
        imgs << ' ' << img.camera_id << ' ' << img.name << '\n';
        for (std::size_t k = 0; k < img.keypoints.size(); ++k)
            imgs << (k ? " " : "") << img.keypoints[k].x << ' ' << img.keypoints[k].y << ' ' << img.keypoints[k].point3d_id;
        imgs << '\n';
    }
    pts << "# POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
    for (const auto& p : b.points) {
        pts << p.id << ' ' << p.xyz[0] << ' ' << p.xyz[1] << ' ' << p.xyz[2] << ' ' << int(p.rgb[0]) << ' ' << int(p.rgb[1])
            << ' ' << int(p.rgb[2]) << ' ' << p.error;
        for (const auto& [image, kp] : p.track) pts << ' ' << image << ' ' << kp;
        pts << '\n';
    }
}

inline void write_colmap_binary(const SfmBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto flush = [&](const std::vector<std::uint8_t>& bytes, const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw InputError("cannot write " + (dir / name).string());
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    };
    using detail::put;
    std::vector<std::uint8_t> out;
    put<std::uint64_t>(out, b.cameras.size());
    for (const auto& [id, c] : b.cameras) {
        put<std::int32_t>(out, id);
        put<std::int32_t>(out, colmap_detail::model_id(c.model));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(c.width));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(c.height));
        for (double v : c.params) put<double>(out, v);
    }
    flush(out, "cameras.bin");
    out.clear();
    put<std::uint64_t>(out, b.images.size());
    for (const auto& img : b.images) {
        put<std::int32_t>(out, img.id);
        for (double q : img.qvec) put<double>(out, q);
        for (double t : img.tvec) put<double>(out, t);
        put<std::int32_t>(out, img.camera_id);
        out.insert(out.end(), img.name.begin(), img.name.end());
        out.push_back(0);
        put<std::uint64_t>(out, img.keypoints.size());
        for (const auto& kp : img.keypoints) {
            put<double>(out, kp.x);
            put<double>(out, kp.y);
            put<std::int64_t>(out, kp.point3d_id);
        }
    }
    flush(out, "images.bin");
    out.clear();
    put<std::uint64_t>(out, b.points.size());
    for (const auto& p : b.points) {
        put<std::uint64_t>(out, p.id);
        for (double v : p.xyz) put<double>(out, v);
        for (auto c : p.rgb) put<std::uint8_t>(out, c);
        put<double>(out, p.error);
        put<std::uint64_t>(out, p.track.size());
        for (const auto& [image, kp] : p.track) {
            put<std::int32_t>(out, image);
            put<std::int32_t>(out, kp);
        }
    }
    flush(out, "points3D.bin");
}

/// Renderer camera for a registered image.
inline Camera colmap_camera(const SfmBundle& b, const ColmapImage& img) {
    const auto it = b.cameras.find(img.camera_id);
    if (it == b.cameras.end()) throw FormatError("colmap: image " + img.name + " references a missing camera");
    const auto& c = it->second;
    Camera cam;
    cam.width = c.width;
    cam.height = c.height;
    if (c.model == "SIMPLE_PINHOLE") {
        cam.fx = cam.fy = c.params[0];
        cam.cx = c.params[1];
        cam.cy = c.params[2];
    } else {
        cam.fx = c.params[0];
        cam.fy = c.params[1];
        cam.cx = c.params[2];
        cam.cy = c.params[3];
    }
    const Eigen::Quaterniond q(img.qvec[0], img.qvec[1], img.qvec[2], img.qvec[3]);
    cam.rotation = q.normalized().toRotationMatrix();
    cam.translation = Eigen::Vector3d(img.tvec[0], img.tvec[1], img.tvec[2]);
    return cam;
}

/// Points for seeding: xyz, color in [0, 1], reprojection error.
inline std::vector<SfmPoint> colmap_sfm_points(const SfmBundle& b) {
    std::vector<SfmPoint> out;
    out.reserve(b.points.size());
    for (const auto& p : b.points)
        out.push_back({Vec3<double>(p.xyz[0], p.xyz[1], p.xyz[2]),
                       Vec3<double>(p.rgb[0] / 255.0, p.rgb[1] / 255.0, p.rgb[2] / 255.0), p.error});
    return out;
}

/// COLMAP image entry for a renderer camera (PINHOLE model).
inline std::pair<ColmapCamera, ColmapImage> to_colmap(const Camera& cam, int id, const std::string& name) {
    ColmapCamera c{id, "PINHOLE", cam.width, cam.height, {cam.fx, cam.fy, cam.cx, cam.cy}};
    ColmapImage img;
    img.id = id;
    img.camera_id = id;
    img.name = name;
    const Eigen::Quaterniond q(cam.rotation);
    img.qvec = {q.w(), q.x(), q.y(), q.z()};
    img.tvec = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
    return {c, img};
}

}  // namespace csplat
