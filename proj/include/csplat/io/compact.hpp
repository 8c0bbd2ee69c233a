// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// The .tgs compact scene format. Little-endian throughout.
//
//   char[4]  magic "TGS1"
//   u32      version
//   u32      N
//   u32[4]   Gaussians per bucket (bucket b = max stored SH band b)
//   bucket 0..3, each as attribute-major half arrays:
//       position[3n] log_scale[3n] rotation[4n] opacity_logit[n] sh[3 (b+1)^2 n]
//   u32      CRC32 of every preceding byte

#pragma once

#include <Eigen/Core>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"

namespace csplat {

static_assert(std::endian::native == std::endian::little, "serializers assume a little-endian host");

inline constexpr char kCompactMagic[4] = {'T', 'G', 'S', '1'};
inline constexpr std::uint32_t kCompactVersion = 1;
inline constexpr std::size_t kCompactHeaderBytes = 28;
inline constexpr int kCompactBaseHalves = 11;  // position, log scale, rotation, opacity

/// Halves stored per Gaussian in bucket b.
inline constexpr int compact_halves(int band) { return kCompactBaseHalves + 3 * (band + 1) * (band + 1); }

/// Closed-form file size for a bucket histogram.
inline std::size_t compact_file_size(const std::array<std::uint32_t, 4>& buckets) {
    std::size_t bytes = kCompactHeaderBytes + 4;
    for (int b = 0; b < 4; ++b) bytes += static_cast<std::size_t>(buckets[b]) * compact_halves(b) * 2;
    return bytes;
}

namespace detail {

inline std::uint16_t to_half_bits(double v) {
    constexpr double kHalfMax = 65504.0;
    const Eigen::half h(static_cast<float>(std::clamp(v, -kHalfMax, kHalfMax)));
    return Eigen::numext::bit_cast<std::uint16_t>(h);
}

inline float from_half_bits(std::uint16_t bits) {
    return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
}

template <typename U>
U get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(U) > in.size()) throw FormatError("compact: truncated file");
    U v;
    std::memcpy(&v, in.data() + pos, sizeof(U));
    pos += sizeof(U);
    return v;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

template <typename T>
std::array<std::uint32_t, 4> bucket_histogram(const GaussianCloud<T>& cloud) {
    std::array<std::uint32_t, 4> h{};
    for (auto b : cloud.sh_bands) ++h[std::min<int>(b, 3)];
    return h;
}

/// Encodes the cloud using each Gaussian's stored band count (cloud.sh_bands).
/// Masks are not stored: prune and strip before saving.
template <typename T>
std::vector<std::uint8_t> encode_compact(const GaussianCloud<T>& cloud) {
    cloud.validate();
    const auto hist = bucket_histogram(cloud);
    std::vector<std::uint8_t> out;
    out.reserve(compact_file_size(hist));
    out.insert(out.end(), kCompactMagic, kCompactMagic + 4);
    detail::put<std::uint32_t>(out, kCompactVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
    for (auto c : hist) detail::put<std::uint32_t>(out, c);

    const auto& p = cloud.params;
    for (int b = 0; b < 4; ++b) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < cloud.size(); ++i)
            if (std::min<int>(cloud.sh_bands[i], 3) == b) rows.push_back(i);
        auto emit = [&](const std::vector<T>& field, int stride, int count) {
            for (auto i : rows)
                for (int k = 0; k < count; ++k)
                    detail::put<std::uint16_t>(out, detail::to_half_bits(field[stride * i + k]));
        };
        emit(p.positions, 3, 3);
        emit(p.log_scales, 3, 3);
        emit(p.rotations, 4, 4);
        emit(p.opacity_logits, 1, 1);
        emit(p.sh, kShFloats, 3 * sh_coeffs_for_degree(b));
    }
    detail::put<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

/// Decodes a compact scene. Gaussians come back grouped by bucket; stripped
/// bands are zero, quaternions are renormalized and masks are open.
template <typename T = float>
GaussianCloud<T> decode_compact(const std::vector<std::uint8_t>& in) {
    if (in.size() < kCompactHeaderBytes + 4) throw FormatError("compact: truncated file");
    if (std::memcmp(in.data(), kCompactMagic, 4) != 0) throw FormatError("compact: bad magic");
    std::size_t pos = 4;
    const auto version = detail::get<std::uint32_t>(in, pos);
    if (version != kCompactVersion) throw FormatError("compact: unsupported version " + std::to_string(version));
    const auto n = detail::get<std::uint32_t>(in, pos);
    std::array<std::uint32_t, 4> hist{};
    std::uint64_t sum = 0;
    for (auto& c : hist) sum += c = detail::get<std::uint32_t>(in, pos);
    if (sum != n) throw FormatError("compact: bucket counts do not sum to N");
    if (in.size() != compact_file_size(hist)) throw FormatError("compact: truncated or oversized file");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, in.data() + in.size() - 4, 4);
    if (stored_crc != detail::crc32_of(in.data(), in.size() - 4)) throw FormatError("compact: checksum mismatch");

    GaussianCloud<T> cloud;
    cloud.params.append_zero_rows(n);
    cloud.sh_bands.assign(n, 0);
    std::fill(cloud.params.mask_logits.begin(), cloud.params.mask_logits.end(), T(kInitialMaskLogit));
    std::fill(cloud.params.sh_mask_logits.begin(), cloud.params.sh_mask_logits.end(), T(kInitialMaskLogit));
    auto& p = cloud.params;
    std::size_t first = 0;
    for (int b = 0; b < 4; ++b) {
        const std::size_t count = hist[b];
        auto take = [&](std::vector<T>& field, int stride, int width) {
            for (std::size_t j = 0; j < count; ++j)
                for (int k = 0; k < width; ++k)
                    field[stride * (first + j) + k] = static_cast<T>(detail::from_half_bits(detail::get<std::uint16_t>(in, pos)));
        };
        take(p.positions, 3, 3);
        take(p.log_scales, 3, 3);
        take(p.rotations, 4, 4);
        take(p.opacity_logits, 1, 1);
        take(p.sh, kShFloats, 3 * sh_coeffs_for_degree(b));
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t i = first + j;
            cloud.sh_bands[i] = static_cast<std::uint8_t>(b);
            T norm = 0;
            for (int k = 0; k < 4; ++k) norm += p.rotations[4 * i + k] * p.rotations[4 * i + k];
            norm = std::sqrt(norm);
            if (!(norm > T(0))) throw FormatError("compact: zero quaternion");
            for (int k = 0; k < 4; ++k) p.rotations[4 * i + k] /= norm;
        }
        first += count;
    }
    return cloud;
}

template <typename T>
void save_compact(const GaussianCloud<T>& cloud, const std::filesystem::path& path) {
    const auto bytes = encode_compact(cloud);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T = float>
GaussianCloud<T> load_compact(const std::filesystem::path& path) {
    return decode_compact<T>(read_file_bytes(path));
}

}  // namespace csplat
