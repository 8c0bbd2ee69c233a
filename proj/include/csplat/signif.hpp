// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include "csplat/cloud.hpp"
#include "csplat/common.hpp"
#include "csplat/raster.hpp"

namespace csplat {

/// Ray-hit counts summed over every pixel of every view. A Gaussian is hit by
/// a pixel when the rasterizer blends it there (alpha >= 1/255, reached before
/// termination).
template <typename T>
std::vector<std::uint64_t> count_hits(const GaussianCloud<T>& cloud, const std::vector<Camera>& cameras,
                                      RenderSettings settings) {
    if (cameras.empty()) throw ContractError("count_hits: no cameras");
    settings.hits = HitMode::counts;
    std::vector<std::uint64_t> total(cloud.size(), 0);
    for (const auto& cam : cameras) {
        const auto out = render_forward(cloud, cam, settings);
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += out.hit_counts[i];
    }
    return total;
}

struct SignificanceReport {
    std::vector<std::uint64_t> hit_count;
    std::vector<double> volume;
    std::vector<double> v_norm;
    std::vector<double> score;
    int iteration = 0;
};

inline constexpr double kDefaultVolumeExponent = 0.5;

/// Nearest-rank percentile of `values` (p in (0, 1]).
inline double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ContractError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size()) - 1e-9));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

/// GS_j = hits_j * alpha_j * min(V_j / V_90, 1)^beta with V_j = 4/3 pi s1 s2 s3.
template <typename T>
SignificanceReport significance_scores(const std::vector<std::uint64_t>& hits, const GaussianCloud<T>& cloud,
                                       double beta = kDefaultVolumeExponent, int iteration = 0) {
    const std::size_t n = cloud.size();
    if (n == 0) throw InputError("significance_scores: empty cloud");
    if (hits.size() != n) throw ContractError("significance_scores: hit counts do not match the cloud");
    SignificanceReport r;
    r.iteration = iteration;
    r.hit_count = hits;
    r.volume.resize(n);
    r.v_norm.resize(n);
    r.score.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ls = static_cast<double>(cloud.params.log_scales[3 * i]) + cloud.params.log_scales[3 * i + 1] +
                          cloud.params.log_scales[3 * i + 2];
        r.volume[i] = 4.0 / 3.0 * M_PI * std::exp(ls);
    }
    const double v90 = nearest_rank_percentile(r.volume, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
        r.v_norm[i] = v90 > 0 ? std::pow(std::min(r.volume[i] / v90, 1.0), beta) : 1.0;
        r.score[i] = static_cast<double>(hits[i]) * static_cast<double>(cloud.opacity(i)) * r.v_norm[i];
    }
    return r;
}

/// Removes the floor(rate * N) lowest-scoring Gaussians (ties: lower index
/// goes first) and compacts the row-aligned `extra` buffers alike.
template <typename T, typename... Extra>
std::size_t prune_by_significance(GaussianCloud<T>& cloud, const std::vector<double>& scores, double rate,
                                  Extra&... extra) {
    if (!(rate >= 0 && rate < 1)) throw ConfigError("prune_by_significance: rate must be in [0, 1)");
    if (scores.size() != cloud.size()) throw ContractError("prune_by_significance: score count mismatch");
    const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(cloud.size())));
    if (k == 0) return 0;
    if (k >= cloud.size()) throw InputError("prune_by_significance: would remove every Gaussian");
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<bool> keep(cloud.size(), true);
    for (std::size_t j = 0; j < k; ++j) keep[order[j]] = false;
    cloud.compact(keep);
    (extra.compact(keep), ...);
    return k;
}

inline constexpr double kFirstPruneRate = 0.6;
inline constexpr double kPruneDecay = 0.7;

/// Rate of the k-th significance prune event.
inline double prune_schedule(int k, double first_rate = kFirstPruneRate, double decay = kPruneDecay, int events = 6) {
    if (k < 0 || k >= events) throw ContractError("prune_schedule: event index out of range");
    return first_rate * std::pow(decay, k);
}

inline void write_significance_csv(std::ostream& os, const SignificanceReport& r) {
    os << "index,hit_count,volume,v_norm,score\n";
    const auto prec = os.precision(17);
    for (std::size_t i = 0; i < r.score.size(); ++i)
        os << i << ',' << r.hit_count[i] << ',' << r.volume[i] << ',' << r.v_norm[i] << ',' << r.score[i] << '\n';
    os.precision(prec);
}

}  // namespace csplat
