// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "csplat/signif.hpp"
#include "support.hpp"

using namespace csplat;

namespace {

std::vector<Camera> ring_cameras(int count, int size) {
    std::vector<Camera> cams;
    for (int k = 0; k < count; ++k) {
        const double a = 2 * M_PI * k / count;
        cams.push_back(Camera::look_at({4 * std::sin(a), -0.5, -4 * std::cos(a)}, {0, 0, 0}, {0, -1, 0}, size * 1.2, size, size));
    }
    return cams;
}

}  // namespace

TEST(CountHits, OccludedGaussianHasNoHits) {
    GaussianCloud<double> cloud;
    std::vector<double> sh(kShFloats, 0.0);
    const double big = std::log(2.0);
    for (int k = 0; k < 3; ++k)
        cloud.push_back({0, 0, -2.0 - 0.1 * k}, {big, big, std::log(0.05)}, {1, 0, 0, 0}, logit(0.999), sh);
    cloud.push_back({0, 0, -4}, {std::log(0.1), std::log(0.1), std::log(0.1)}, {1, 0, 0, 0}, logit(0.6), sh);
    const auto cam = Camera::look_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0}, 20, 16, 16);
    const auto hits = count_hits(cloud, {cam}, RenderSettings{});
    EXPECT_EQ(hits[3], 0u);
    EXPECT_GT(hits[0], 0u);
}

TEST(CountHits, SingleGaussianCountsPixelsAboveThreshold) {
    GaussianCloud<double> cloud;
    std::vector<double> sh(kShFloats, 0.0);
    const double ls = std::log(0.15);
    cloud.push_back({0.05, -0.03, -2}, {ls, ls + 0.3, ls}, {0.9, 0.1, 0.2, 0.1}, logit(0.4), sh);
    const auto cam = Camera::look_at({0, 0, 0}, {0, 0, -1}, {0, 1, 0}, 12, 8, 8);
    const auto hits = count_hits(cloud, {cam}, RenderSettings{});
    // Brute force: evaluate the splat at every pixel center.
    const auto cov3 = build_covariance<double>(cloud.log_scale(0), cloud.rotation(0));
    const auto p = project_gaussian<double>(cloud.position(0), cov3, cam, 0.3);
    ASSERT_TRUE(p.has_value());
    std::uint64_t k = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const Vec2<double> d = Vec2<double>(x + 0.5, y + 0.5) - p->mean;
            const double maha = d.dot(p->cov.inverse() * d);
            if (maha <= 9 && std::min(0.99, 0.4 * std::exp(-0.5 * maha)) >= 1.0 / 255) ++k;
        }
    EXPECT_GT(k, 0u);
    EXPECT_LT(k, 64u);
    EXPECT_EQ(hits[0], k);
}

TEST(CountHits, MultiViewMatchesReferenceLoop) {
    std::mt19937_64 rng(11);
    testutil::SceneOptions o;
    o.max_alpha = 0.95;
    for (int trial = 0; trial < 4; ++trial) {
        const auto cloud = testutil::random_cloud(100, rng, o);
        const auto cams = ring_cameras(4, 32);
        RenderSettings s;
        s.threads = 1 + trial % 2;
        const auto hits = count_hits(cloud, cams, s);
        std::vector<std::uint64_t> expected(cloud.size(), 0);
        for (const auto& cam : cams) {
            const auto ref = testutil::reference_render(cloud, cam, s);
            for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += ref.hits[i];
        }
        EXPECT_EQ(hits, expected);
    }
}

TEST(CountHits, NoCamerasIsContractViolation) {
    GaussianCloud<double> cloud;
    EXPECT_THROW(count_hits(cloud, {}, RenderSettings{}), ContractError);
}

TEST(SignificanceScores, ZeroOpacityOrZeroHitsGiveZero) {
    std::mt19937_64 rng(1);
    auto cloud = testutil::random_cloud(5, rng);
    cloud.params.opacity_logits[2] = -1e4;
    const auto r = significance_scores<double>({3, 4, 5, 0, 7}, cloud);
    EXPECT_EQ(r.score[2], 0.0);
    EXPECT_EQ(r.score[3], 0.0);
    EXPECT_GT(r.score[0], 0.0);
}

TEST(SignificanceScores, IdenticalGaussiansScoreEqually) {
    std::mt19937_64 rng(2);
    const auto one = testutil::random_cloud(1, rng);
    GaussianCloud<double> cloud;
    for (int k = 0; k < 7; ++k) cloud.append_row(one, 0);
    const auto r = significance_scores<double>(std::vector<std::uint64_t>(7, 9), cloud);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(r.v_norm[i], 1.0);
        EXPECT_EQ(r.score[i], r.score[0]);
    }
}

TEST(SignificanceScores, MatchesSortingOracle) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> h(0, 500);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 13 + 17 * trial;
        const auto cloud = testutil::random_cloud(n, rng);
        std::vector<std::uint64_t> hits(n);
        for (auto& v : hits) v = h(rng);
        for (double beta : {1.0, 0.5}) {
            const auto r = significance_scores(hits, cloud, beta);
            std::vector<double> vol(n);
            for (std::size_t i = 0; i < n; ++i) {
                const Vec3<double> s = cloud.log_scale(i).array().exp().matrix();
                vol[i] = 4.0 / 3.0 * M_PI * s[0] * s[1] * s[2];
            }
            auto sorted = vol;
            std::sort(sorted.begin(), sorted.end());
            // Nearest rank: smallest value with at least 90% of the set at or below it.
            std::size_t rank = 1;
            while (static_cast<double>(rank) < 0.9 * n) ++rank;
            const double v90 = sorted[rank - 1];
            for (std::size_t i = 0; i < n; ++i) {
                const double vn = std::pow(std::min(vol[i] / v90, 1.0), beta);
                EXPECT_NEAR(r.v_norm[i], vn, 1e-12);
                EXPECT_GT(r.v_norm[i], 0.0);
                EXPECT_LE(r.v_norm[i], 1.0);
                EXPECT_NEAR(r.score[i], hits[i] * cloud.opacity(i) * vn, 1e-9 * (1 + r.score[i]));
            }
        }
    }
}

TEST(SignificanceScores, MonotoneInOpacityAndHits) {
    std::mt19937_64 rng(4);
    auto cloud = testutil::random_cloud(10, rng);
    std::vector<std::uint64_t> hits(10, 20);
    const double base = significance_scores(hits, cloud).score[4];
    hits[4] += 5;
    EXPECT_GE(significance_scores(hits, cloud).score[4], base);
    hits[4] -= 5;
    cloud.params.opacity_logits[4] += 0.5;
    EXPECT_GE(significance_scores(hits, cloud).score[4], base);
}

TEST(SignificanceScores, EmptyCloudIsAnError) {
    GaussianCloud<double> cloud;
    EXPECT_THROW(significance_scores<double>({}, cloud), InputError);
}

TEST(PruneBySignificance, ZeroCountUnchanged) {
    std::mt19937_64 rng(5);
    auto cloud = testutil::random_cloud(5, rng);
    EXPECT_EQ(prune_by_significance(cloud, {1, 2, 3, 4, 5}, 0.1), 0u);
    EXPECT_EQ(cloud.size(), 5u);
}

TEST(PruneBySignificance, RemovesSixLowest) {
    std::mt19937_64 rng(6);
    auto cloud = testutil::random_cloud(10, rng);
    const auto before = cloud;
    const std::vector<double> scores{5, 9, 1, 7, 3, 8, 0, 2, 6, 4};
    EXPECT_EQ(prune_by_significance(cloud, scores, 0.6), 6u);
    ASSERT_EQ(cloud.size(), 4u);
    // Survivors are the scores 6..9: indices 1, 3, 5, 8.
    const std::size_t idx[4] = {1, 3, 5, 8};
    for (int j = 0; j < 4; ++j) EXPECT_EQ(cloud.position(j), before.position(idx[j]));
}

TEST(PruneBySignificance, TiesMatchStableSortOracle) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> u(0, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + trial;
        auto cloud = testutil::random_cloud(n, rng);
        for (std::size_t i = 0; i < n; ++i) cloud.params.opacity_logits[i] = static_cast<double>(i);  // row tag
        std::vector<double> scores(n);
        for (auto& s : scores) s = u(rng);
        std::vector<std::pair<double, std::size_t>> keyed;
        for (std::size_t i = 0; i < n; ++i) keyed.push_back({scores[i], i});
        std::sort(keyed.begin(), keyed.end());
        const double rate = 0.3 + 0.02 * trial;
        const auto k = static_cast<std::size_t>(std::floor(rate * n));
        std::set<double> survivors;
        for (std::size_t j = k; j < n; ++j) survivors.insert(static_cast<double>(keyed[j].second));
        GaussianParams<double> moments;
        moments.append_zero_rows(n);
        moments.opacity_logits = cloud.params.opacity_logits;
        prune_by_significance(cloud, scores, rate, moments);
        EXPECT_EQ(std::set<double>(cloud.params.opacity_logits.begin(), cloud.params.opacity_logits.end()), survivors);
        EXPECT_EQ(moments.opacity_logits, cloud.params.opacity_logits);
        double min_kept = 1e9;
        for (double t : cloud.params.opacity_logits) min_kept = std::min(min_kept, scores[static_cast<std::size_t>(t)]);
        for (std::size_t j = 0; j < k; ++j) EXPECT_LE(keyed[j].first, min_kept);
    }
}

TEST(PruneBySignificance, RejectsBadRates) {
    std::mt19937_64 rng(8);
    auto cloud = testutil::random_cloud(3, rng);
    EXPECT_THROW(prune_by_significance(cloud, {1, 2, 3}, 1.0), ConfigError);
    EXPECT_THROW(prune_by_significance(cloud, {1, 2, 3}, -0.1), ConfigError);
    EXPECT_THROW(prune_by_significance(cloud, {1, 2}, 0.5), ContractError);
}

TEST(PruneSchedule, Rates) {
    EXPECT_DOUBLE_EQ(prune_schedule(0), 0.6);
    EXPECT_NEAR(prune_schedule(1), 0.42, 1e-15);
    EXPECT_NEAR(prune_schedule(5), 0.6 * std::pow(0.7, 5), 1e-15);
    EXPECT_NEAR(prune_schedule(5), 0.1008, 1e-4);
    EXPECT_THROW(prune_schedule(6), ContractError);
}

TEST(SignificanceCsv, HeaderAndRows) {
    std::mt19937_64 rng(9);
    const auto cloud = testutil::random_cloud(3, rng);
    const auto r = significance_scores<double>({1, 2, 3}, cloud);
    std::ostringstream os;
    write_significance_csv(os, r);
    const auto text = os.str();
    EXPECT_EQ(text.rfind("index,hit_count,volume,v_norm,score\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
