// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "csplat/sched.hpp"

using namespace csplat;

TEST(ResolutionAt, EndpointsAndClamp) {
    for (auto mode : {ResolutionMode::linear, ResolutionMode::logarithmic}) {
        EXPECT_EQ(resolution_at(0, 100, 800, 19500, mode), 100);
        EXPECT_EQ(resolution_at(19500, 100, 800, 19500, mode), 800);
        EXPECT_EQ(resolution_at(29000, 100, 800, 19500, mode), 800);
    }
    // Paper start: full resolution divided by 8.
    EXPECT_EQ(resolution_at(0, start_resolution(1024, 8), 1024, 19500, ResolutionMode::logarithmic), 128);
}

TEST(ResolutionAt, LinearMidpoint) {
    EXPECT_EQ(resolution_at(500, 100, 800, 1000, ResolutionMode::linear), 450);
}

TEST(ResolutionAt, LinearMatchesDirectEvaluationOnGrid) {
    for (int rs : {1, 7, 16, 100})
        for (int re : {16, 128, 801})
            for (int tau : {1, 33, 1000}) {
                if (rs > re) continue;
                for (int i = 0; i <= 2 * tau; i += std::max(1, tau / 17)) {
                    const double raw = rs + (re - rs) * static_cast<double>(i) / tau;
                    const int expected = std::min(static_cast<int>(std::floor(raw + 0.5)), re);
                    EXPECT_EQ(resolution_at(i, rs, re, tau, ResolutionMode::linear), expected);
                }
            }
}

TEST(ResolutionAt, LogarithmicIsGeometric) {
    // Halfway in log space is the geometric mean.
    EXPECT_EQ(resolution_at(500, 100, 900, 1000, ResolutionMode::logarithmic), 300);
}

TEST(ResolutionAt, MonotoneAndReachesEnd) {
    for (auto mode : {ResolutionMode::linear, ResolutionMode::logarithmic}) {
        int prev = 0;
        for (int i = 0; i <= 3000; ++i) {
            const int r = resolution_at(i, 16, 128, 2500, mode);
            EXPECT_GE(r, prev);
            prev = r;
        }
        EXPECT_EQ(prev, 128);
    }
}

TEST(ResolutionAt, RejectsBadRange) {
    EXPECT_THROW(resolution_at(0, 200, 100, 10, ResolutionMode::linear), ConfigError);
    EXPECT_THROW(resolution_at(0, 10, 100, 0, ResolutionMode::linear), ConfigError);
}

TEST(StartResolution, FloorKeepsSsimWindow) {
    EXPECT_EQ(start_resolution(128, 8), 16);
    EXPECT_EQ(start_resolution(64, 8), 16);
    EXPECT_EQ(start_resolution(12, 8), 12);
    EXPECT_EQ(start_resolution(1000, 8), 125);
}

TEST(BlurAt, PaperStart) {
    const BlurSpec b = blur_at(0, {9, 2.4}, 100, 0.98, 19500);
    EXPECT_EQ(b.kernel_size, 9);
    EXPECT_DOUBLE_EQ(b.sigma, 2.4);
}

TEST(BlurAt, DisabledAfterProgressiveEnd) {
    EXPECT_FALSE(blur_at(19500, {9, 2.4}, 100, 0.98, 19500).enabled());
    EXPECT_FALSE(blur_at(25000, {9, 2.4}, 100, 0.98, 19500).enabled());
}

TEST(BlurAt, DecayedExample) {
    const BlurSpec b = blur_at(5000, {9, 2.4}, 100, 0.98, 19500);
    EXPECT_NEAR(b.sigma, 2.4 * std::pow(0.98, 50), 1e-12);
    EXPECT_NEAR(b.sigma, 0.874, 1e-3);
    EXPECT_EQ(b.kernel_size, 5);
}

TEST(BlurAt, DownsampleShrinksSigmaAndKernel) {
    const BlurSpec half = blur_at(0, {9, 2.4}, 100, 0.98, 19500, 2.0);
    EXPECT_DOUBLE_EQ(half.sigma, 1.2);
    EXPECT_EQ(half.kernel_size, 5);
    const BlurSpec quarter = blur_at(0, {9, 2.4}, 100, 0.98, 19500, 4.0);
    EXPECT_DOUBLE_EQ(quarter.sigma, 0.6);
    EXPECT_EQ(quarter.kernel_size, 3);
    EXPECT_FALSE(blur_at(0, {9, 2.4}, 100, 0.98, 19500, 8.0).enabled());
}

TEST(BlurAt, MonotoneOddAndFloor) {
    const double d = default_blur_decay(2.4, 100, 19500);
    double prev = 1e9;
    for (int i = 0; i < 20000; i += 50) {
        const BlurSpec b = blur_at(i, {9, 2.4}, 100, d, 19500);
        EXPECT_EQ(b.kernel_size % 2, 1);
        EXPECT_LE(b.sigma, prev);
        if (b.enabled()) {
            EXPECT_GE(b.sigma, kMinBlurSigma);
        } else {
            EXPECT_EQ(b.sigma, 0.0);
        }
        prev = b.sigma;
    }
}

TEST(BlurAt, DefaultDecayHitsFloorAtProgressiveEnd) {
    const double d = default_blur_decay(2.4, 100, 19500);
    EXPECT_NEAR(2.4 * std::pow(d, 19500 / 100), 0.3, 1e-12);
    EXPECT_TRUE(blur_at(19400, {9, 2.4}, 100, d, 19500).enabled());
}

TEST(BlurAt, RejectsBadDecay) {
    EXPECT_THROW(blur_at(0, {9, 2.4}, 100, 1.0, 19500), ConfigError);
    EXPECT_THROW(blur_at(0, {9, 2.4}, 100, 0.0, 19500), ConfigError);
}

TEST(LowpassS, Formula) {
    EXPECT_NEAR(lowpass_s_at(10, 128, 128), 16384 / (90 * M_PI), 1e-12);
    EXPECT_NEAR(lowpass_s_at(10, 128, 128), 57.95, 1e-2);
    EXPECT_EQ(lowpass_s_at(10000000, 128, 128), 0.3);
    EXPECT_THROW(lowpass_s_at(0, 8, 8), ContractError);
}

TEST(LowpassS, FloorAndStrictDecrease) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n < 5000; n += 7) {
        const double s = lowpass_s_at(n, 64, 48);
        EXPECT_GE(s, 0.3);
        if (prev > 0.3) {
            EXPECT_LT(s, prev);
        }
        prev = s;
    }
}

namespace {

std::vector<SfmPoint> random_points(std::size_t n, std::mt19937_64& rng, bool tie_errors = false) {
    std::uniform_real_distribution<double> u(-1, 1), e(0, 2);
    std::vector<SfmPoint> pts(n);
    for (auto& p : pts) {
        p.xyz = Vec3<double>(u(rng), u(rng), 0.3 * u(rng));
        p.rgb = Vec3<double>(0.5 + 0.5 * u(rng), 0.5, 0.2);
        p.error = tie_errors ? std::round(e(rng) * 3) : e(rng);
    }
    return pts;
}

}  // namespace

TEST(SeedFromSfm, KeepAll) {
    std::mt19937_64 rng(1);
    const auto pts = random_points(25, rng);
    EXPECT_EQ(seed_from_sfm<double>(pts, 1.0).size(), 25u);
}

TEST(SeedFromSfm, KeepsLowestErrors) {
    std::vector<SfmPoint> pts(10);
    const double errs[10] = {0.9, 0.1, 0.5, 0.8, 0.05, 0.7, 0.6, 0.3, 0.4, 0.2};
    for (int i = 0; i < 10; ++i) {
        pts[i].xyz = Vec3<double>(i, 0, 0);
        pts[i].error = errs[i];
    }
    EXPECT_EQ(select_sfm_points(pts, 0.2), (std::vector<std::size_t>{1, 4}));
    const auto cloud = seed_from_sfm<double>(pts, 0.2);
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_EQ(cloud.position(0).x(), 1.0);
    EXPECT_EQ(cloud.position(1).x(), 4.0);
}

TEST(SeedFromSfm, SelectionMatchesSortOracleWithTies) {
    std::mt19937_64 rng(2);
    for (double frac : {0.2, 0.37, 0.5, 0.99}) {
        const auto pts = random_points(101, rng, true);
        std::vector<std::pair<double, std::size_t>> keyed;
        for (std::size_t i = 0; i < pts.size(); ++i) keyed.push_back({pts[i].error, i});
        std::sort(keyed.begin(), keyed.end());
        const auto k = static_cast<std::size_t>(std::ceil(frac * 101));
        std::set<std::size_t> expected;
        for (std::size_t j = 0; j < k; ++j) expected.insert(keyed[j].second);
        const auto got = select_sfm_points(pts, frac);
        EXPECT_EQ(std::set<std::size_t>(got.begin(), got.end()), expected);
    }
}

TEST(SeedFromSfm, InitialAttributes) {
    std::mt19937_64 rng(3);
    const auto pts = random_points(40, rng);
    const auto cloud = seed_from_sfm<double>(pts, 1.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_NEAR(cloud.opacity(i), 0.1, 1e-12);
        EXPECT_EQ(cloud.rotation(i), (std::array<double, 4>{1, 0, 0, 0}));
        EXPECT_EQ(cloud.params.log_scales[3 * i], cloud.params.log_scales[3 * i + 2]);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(kShC0 * cloud.sh(i)[c] + 0.5, pts[i].rgb[c], 1e-12);
        for (int k = 3; k < kShFloats; ++k) EXPECT_EQ(cloud.sh(i)[k], 0.0);
    }
}

TEST(SeedFromSfm, KnnMatchesBruteForce) {
    std::mt19937_64 rng(4);
    for (std::size_t n : {2u, 3u, 4u, 50u, 700u}) {
        const auto pts = random_points(n, rng);
        std::vector<Vec3<double>> xyz;
        for (const auto& p : pts) xyz.push_back(p.xyz);
        const auto got = mean_knn_distance(xyz, 3);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> d;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) d.push_back((xyz[i] - xyz[j]).norm());
            std::sort(d.begin(), d.end());
            const std::size_t k = std::min<std::size_t>(3, d.size());
            double mean = 0;
            for (std::size_t j = 0; j < k; ++j) mean += d[j];
            EXPECT_NEAR(got[i], mean / k, 1e-12);
        }
    }
}

TEST(SeedFromSfm, Errors) {
    EXPECT_THROW(seed_from_sfm<double>({}, 0.5), InputError);
    std::vector<SfmPoint> one(1);
    EXPECT_THROW(seed_from_sfm<double>(one, 0.0), ConfigError);
    EXPECT_EQ(seed_from_sfm<double>(one, 1.0).size(), 1u);
}

TEST(PhaseAt, LateWindowOnly) {
    const Timeline t;
    PhaseActions expected;
    expected.late_densify = true;
    EXPECT_EQ(phase_at(20100, t), expected);
}

TEST(PhaseAt, LastIterationIsQuiet) {
    EXPECT_EQ(phase_at(29999, Timeline{}), PhaseActions{});
    PhaseActions sh_only;
    sh_only.sh_full_update = true;
    EXPECT_EQ(phase_at(29984, Timeline{}), sh_only);  // 29984 = 16 * 1874
}

TEST(PhaseAt, ProgressiveScaleFlipsAtTenK) {
    EXPECT_TRUE(phase_at(9900, Timeline{}).progressive_scale_active);
    EXPECT_FALSE(phase_at(10100, Timeline{}).progressive_scale_active);
}

TEST(PhaseAt, StandardDensifyAndMaskPruneRules) {
    const Timeline t;
    EXPECT_FALSE(phase_at(500, t).standard_densify);  // warmup
    EXPECT_TRUE(phase_at(600, t).standard_densify);
    EXPECT_TRUE(phase_at(15000, t).standard_densify);
    EXPECT_FALSE(phase_at(15100, t).standard_densify);
    EXPECT_FALSE(phase_at(15000, t).mask_prune);
    EXPECT_TRUE(phase_at(15500, t).mask_prune);
    EXPECT_FALSE(phase_at(20000, t).mask_prune);  // inside the late window
    EXPECT_FALSE(phase_at(20500, t).mask_prune);
    EXPECT_TRUE(phase_at(21000, t).mask_prune);
}

TEST(PhaseAt, SignificanceEvents) {
    const Timeline t;
    int k = 0;
    for (int i = 0; i < t.total_iters; ++i) {
        const auto a = phase_at(i, t);
        if (a.significance_prune) {
            EXPECT_EQ(a.significance_event, k);
            EXPECT_EQ(i, t.significance_events[k]);
            ++k;
        }
    }
    EXPECT_EQ(k, 6);
    EXPECT_EQ(t.significance_events.back(), 22000);
}

TEST(PhaseAt, PureFunction) {
    const Timeline t;
    for (int i = 0; i < 30000; i += 37) EXPECT_EQ(phase_at(i, t), phase_at(i, t));
    EXPECT_THROW(phase_at(30000, t), ContractError);
}

TEST(Timeline, ScaledKeepsLayout) {
    const Timeline t = Timeline{}.scaled_to(5000);
    t.validate();
    EXPECT_EQ(t.densify_until, 2500);
    EXPECT_EQ(t.progressive_end, 3250);
    EXPECT_EQ(t.progressive_scale_until, 1667);
    EXPECT_EQ(t.significance_events.back(), 3667);
    EXPECT_EQ(t.densify_interval, 100);
}

TEST(Timeline, ValidationRejectsOutOfRange) {
    Timeline t;
    t.densify_until = 40000;
    EXPECT_THROW(t.validate(), ConfigError);
    t = Timeline{};
    t.sh_cadence = 0;
    EXPECT_THROW(t.validate(), ConfigError);
}
