// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"

namespace csplat {

/// Forward value and straight-through derivative of a thresholded sigmoid mask.
template <typename T>
struct HardMask {
    T value;  // 1 if sigmoid(m) > threshold else 0
    T grad;   // d(output)/dm = sigmoid'(m)
};

/// M = sg(1[sigmoid(m) > eps] - sigmoid(m)) + sigmoid(m): the indicator in the
/// forward pass, the sigmoid derivative in the backward pass.
template <typename T>
HardMask<T> hard_mask(T logit, T threshold) {
    const T s = sigmoid(logit);
    return {s > threshold ? T(1) : T(0), s * (T(1) - s)};
}

/// Band weights for bands 1..3, proportional to coefficient count and summing to 1.
inline constexpr std::array<double, 3> kShBandWeights{9.0 / 45.0, 15.0 / 45.0, 21.0 / 45.0};

template <typename T>
struct MaskedAttributes {
    std::vector<T> opacity;  // M * sigmoid(opacity_logit)
    std::vector<T> scale;    // M * exp(log_scale), 3 per Gaussian
};

template <typename T>
MaskedAttributes<T> apply_gaussian_mask(const GaussianCloud<T>& cloud, std::span<const T> mask_logits, T threshold) {
    if (mask_logits.size() != cloud.size()) throw ContractError("apply_gaussian_mask: mask count != Gaussian count");
    MaskedAttributes<T> out;
    out.opacity.resize(cloud.size());
    out.scale.resize(3 * cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const T m = hard_mask(mask_logits[i], threshold).value;
        out.opacity[i] = m * cloud.opacity(i);
        for (int k = 0; k < 3; ++k) out.scale[3 * i + k] = m * std::exp(cloud.params.log_scales[3 * i + k]);
    }
    return out;
}

template <typename T>
MaskedAttributes<T> apply_gaussian_mask(const GaussianCloud<T>& cloud, T threshold) {
    return apply_gaussian_mask(cloud, std::span<const T>(cloud.params.mask_logits), threshold);
}

struct MaskLosses {
    double gaussian = 0;  // L_m
    double sh = 0;        // L_sh
};

/// L_m = mean sigmoid(m_n); L_sh = mean over n of sum_l w_l sigmoid(m_sh,n^l).
template <typename T>
MaskLosses mask_losses(const GaussianParams<T>& p) {
    MaskLosses out;
    const std::size_t n = p.size();
    if (n == 0) return out;
    for (std::size_t i = 0; i < n; ++i) {
        out.gaussian += sigmoid(static_cast<double>(p.mask_logits[i]));
        for (int l = 0; l < 3; ++l) out.sh += kShBandWeights[l] * sigmoid(static_cast<double>(p.sh_mask_logits[3 * i + l]));
    }
    out.gaussian /= static_cast<double>(n);
    out.sh /= static_cast<double>(n);
    return out;
}

/// Adds lambda_m dL_m/dm and lambda_sh dL_sh/dm_sh into `grad`.
template <typename T>
void mask_losses_backward(const GaussianParams<T>& p, double lambda_m, double lambda_sh, GaussianParams<T>& grad) {
    const std::size_t n = p.size();
    if (n == 0) return;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (lambda_m != 0)
            grad.mask_logits[i] += static_cast<T>(lambda_m * inv_n * sigmoid_grad(static_cast<double>(p.mask_logits[i])));
        if (lambda_sh != 0)
            for (int l = 0; l < 3; ++l)
                grad.sh_mask_logits[3 * i + l] += static_cast<T>(
                    lambda_sh * inv_n * kShBandWeights[l] * sigmoid_grad(static_cast<double>(p.sh_mask_logits[3 * i + l])));
    }
}

template <typename T>
std::vector<bool> mask_keep_flags(const GaussianCloud<T>& cloud, T threshold) {
    std::vector<bool> keep(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) keep[i] = sigmoid(cloud.params.mask_logits[i]) > threshold;
    return keep;
}

/// Removes Gaussians whose hard mask is 0 and compacts every extra row-aligned
/// buffer (optimizer moments, statistics) the same way.
template <typename T, typename... Extra>
std::size_t prune_by_mask(GaussianCloud<T>& cloud, T threshold, Extra&... extra) {
    const auto keep = mask_keep_flags(cloud, threshold);
    const auto survivors = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    if (survivors == 0 && !cloud.empty()) throw InputError("prune_by_mask: every Gaussian is masked; scene would be empty");
    const std::size_t removed = cloud.size() - survivors;
    if (removed == 0) return 0;
    cloud.compact(keep);
    (extra.compact(keep), ...);
    return removed;
}

/// Highest band whose hard SH mask is 1 (0 when all higher bands are masked).
template <typename T>
int retained_band(const GaussianCloud<T>& cloud, std::size_t i, T threshold) {
    int top = 0;
    for (int l = 1; l <= 3; ++l)
        if (sigmoid(cloud.params.sh_mask_logits[3 * i + l - 1]) > threshold) top = l;
    return std::min<int>(top, cloud.sh_bands[i]);
}

/// Drops masked bands: coefficients of masked bands are zeroed, each Gaussian's
/// stored band count is cut to its highest kept band, and the SH masks are
/// opened so that the zeroed storage alone carries the masking.
template <typename T>
void strip_sh_bands(GaussianCloud<T>& cloud, T threshold) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto sh = cloud.sh(i);
        for (int l = 1; l <= 3; ++l) {
            const bool kept = sigmoid(cloud.params.sh_mask_logits[3 * i + l - 1]) > threshold && l <= cloud.sh_bands[i];
            if (!kept)
                for (int k = sh_band_begin(l); k < sh_band_begin(l + 1); ++k) sh[3 * k] = sh[3 * k + 1] = sh[3 * k + 2] = T(0);
        }
        cloud.sh_bands[i] = static_cast<std::uint8_t>(retained_band(cloud, i, threshold));
        for (int l = 0; l < 3; ++l) cloud.params.sh_mask_logits[3 * i + l] = T(kInitialMaskLogit);
    }
}

}  // namespace csplat
