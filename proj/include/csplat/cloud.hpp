// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "csplat/common.hpp"
#include "csplat/geom.hpp"

namespace csplat {

/// Initial mask logit: sigmoid(2) ~ 0.88, every Gaussian and band kept.
inline constexpr double kInitialMaskLogit = 2.0;

/// Structure-of-arrays storage for every learnable per-Gaussian quantity.
/// The same layout doubles as a gradient buffer and as optimizer state.
template <typename T>
struct GaussianParams {
    static constexpr int kFieldCount = 7;

    std::vector<T> positions;        // 3 per Gaussian
    std::vector<T> log_scales;       // 3
    std::vector<T> rotations;        // 4, (w, x, y, z)
    std::vector<T> opacity_logits;   // 1
    std::vector<T> sh;               // 48, 16 basis functions x RGB
    std::vector<T> mask_logits;      // 1
    std::vector<T> sh_mask_logits;   // 3, bands 1..3

    static constexpr std::array<int, kFieldCount> kStrides{3, 3, 4, 1, kShFloats, 1, 3};

    std::size_t size() const { return opacity_logits.size(); }

    /// Visits (field index, vector, stride) for every field.
    template <typename Fn>
    void for_each_field(Fn&& fn) {
        std::vector<T>* fields[] = {&positions, &log_scales, &rotations, &opacity_logits,
                                    &sh, &mask_logits, &sh_mask_logits};
        for (int f = 0; f < kFieldCount; ++f) fn(f, *fields[f], kStrides[f]);
    }
    template <typename Fn>
    void for_each_field(Fn&& fn) const {
        const std::vector<T>* fields[] = {&positions, &log_scales, &rotations, &opacity_logits,
                                          &sh, &mask_logits, &sh_mask_logits};
        for (int f = 0; f < kFieldCount; ++f) fn(f, *fields[f], kStrides[f]);
    }

    void resize(std::size_t n, T fill = T(0)) {
        for_each_field([&](int, std::vector<T>& v, int stride) { v.assign(n * stride, fill); });
    }

    static GaussianParams zeros(std::size_t n) {
        GaussianParams p;
        p.resize(n);
        return p;
    }

    /// Keeps rows whose flag is set, preserving order.
    void compact(const std::vector<bool>& keep) {
        for_each_field([&](int, std::vector<T>& v, int stride) {
            std::size_t out = 0;
            for (std::size_t i = 0; i < keep.size(); ++i) {
                if (!keep[i]) continue;
                if (out != i) std::copy_n(v.begin() + i * stride, stride, v.begin() + out * stride);
                ++out;
            }
            v.resize(out * stride);
        });
    }

    /// Appends row `src_row` of `src` (same type) to the end.
    void append_row(const GaussianParams& src, std::size_t src_row) {
        std::vector<const std::vector<T>*> from;
        src.for_each_field([&](int, const std::vector<T>& v, int) { from.push_back(&v); });
        for_each_field([&](int f, std::vector<T>& v, int stride) {
            const auto& s = *from[f];
            v.insert(v.end(), s.begin() + src_row * stride, s.begin() + (src_row + 1) * stride);
        });
    }

    void append_zero_rows(std::size_t n) {
        for_each_field([&](int, std::vector<T>& v, int stride) { v.resize(v.size() + n * stride, T(0)); });
    }

    bool all_finite() const {
        bool ok = true;
        for_each_field([&](int, const std::vector<T>& v, int) {
            for (T x : v)
                if (!std::isfinite(x)) ok = false;
        });
        return ok;
    }
};

/// The learnable scene: parameters plus the per-Gaussian highest SH band that
/// is still stored (3 unless bands were stripped after training).
template <typename T>
struct GaussianCloud {
    GaussianParams<T> params;
    std::vector<std::uint8_t> sh_bands;

    std::size_t size() const { return params.size(); }
    bool empty() const { return size() == 0; }

    Vec3<T> position(std::size_t i) const {
        return {params.positions[3 * i], params.positions[3 * i + 1], params.positions[3 * i + 2]};
    }
    Vec3<T> log_scale(std::size_t i) const {
        return {params.log_scales[3 * i], params.log_scales[3 * i + 1], params.log_scales[3 * i + 2]};
    }
    std::array<T, 4> rotation(std::size_t i) const {
        return {params.rotations[4 * i], params.rotations[4 * i + 1], params.rotations[4 * i + 2],
                params.rotations[4 * i + 3]};
    }
    T opacity(std::size_t i) const { return sigmoid(params.opacity_logits[i]); }
    std::span<const T> sh(std::size_t i) const { return {params.sh.data() + kShFloats * i, kShFloats}; }
    std::span<T> sh(std::size_t i) { return {params.sh.data() + kShFloats * i, kShFloats}; }

    /// Adds one Gaussian with default mask logits; `sh` may hold fewer than 48 values.
    void push_back(const Vec3<T>& pos, const Vec3<T>& log_scale, const std::array<T, 4>& rot, T opacity_logit,
                   std::span<const T> sh_values, std::uint8_t bands = kMaxShDegree) {
        auto& p = params;
        p.positions.insert(p.positions.end(), {pos.x(), pos.y(), pos.z()});
        p.log_scales.insert(p.log_scales.end(), {log_scale.x(), log_scale.y(), log_scale.z()});
        p.rotations.insert(p.rotations.end(), rot.begin(), rot.end());
        p.opacity_logits.push_back(opacity_logit);
        const std::size_t base = p.sh.size();
        p.sh.resize(base + kShFloats, T(0));
        std::copy_n(sh_values.begin(), std::min<std::size_t>(sh_values.size(), kShFloats), p.sh.begin() + base);
        p.mask_logits.push_back(T(kInitialMaskLogit));
        p.sh_mask_logits.insert(p.sh_mask_logits.end(), 3, T(kInitialMaskLogit));
        sh_bands.push_back(bands);
    }

    void compact(const std::vector<bool>& keep) {
        params.compact(keep);
        std::size_t out = 0;
        for (std::size_t i = 0; i < keep.size(); ++i)
            if (keep[i]) sh_bands[out++] = sh_bands[i];
        sh_bands.resize(out);
    }

    void append_row(const GaussianCloud& src, std::size_t row) {
        params.append_row(src.params, row);
        sh_bands.push_back(src.sh_bands[row]);
    }

    void validate() const {
        const std::size_t n = size();
        bool ok = sh_bands.size() == n;
        params.for_each_field([&](int, const std::vector<T>& v, int stride) {
            if (v.size() != n * static_cast<std::size_t>(stride)) ok = false;
        });
        if (!ok) throw ContractError("gaussian cloud: attribute arrays have inconsistent sizes");
    }

    template <typename U>
    GaussianCloud<U> cast() const {
        GaussianCloud<U> out;
        std::vector<std::vector<U>*> to;
        out.params.for_each_field([&](int, std::vector<U>& v, int) { to.push_back(&v); });
        params.for_each_field([&](int f, const std::vector<T>& v, int) {
            to[f]->resize(v.size());
            std::transform(v.begin(), v.end(), to[f]->begin(), [](T x) { return static_cast<U>(x); });
        });
        out.sh_bands = sh_bands;
        return out;
    }
};

}  // namespace csplat
