// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "csplat/metrics.hpp"
#include "support.hpp"

using namespace csplat;

namespace {

// Naive oracle: explicitly mirror-padded planes, a 2D window normalized as a
// whole, and centered second moments.
double naive_ssim(const Image<double>& a, const Image<double>& b) {
    const int r = 5;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    double win[11][11], wsum = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) wsum += win[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    for (auto& row : win)
        for (double& v : row) v /= wsum;
    const int pw = a.width + 2 * r, ph = a.height + 2 * r;
    auto mirror = [](int i, int n) {
        // d c b | a b c d | c b a
        if (i < 0) return -i;
        if (i >= n) return 2 * (n - 1) - i;
        return i;
    };
    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> A(static_cast<std::size_t>(pw) * ph), B(A.size());
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
                A[y * pw + x] = a.at(mirror(x - r, a.width), mirror(y - r, a.height), c);
                B[y * pw + x] = b.at(mirror(x - r, a.width), mirror(y - r, a.height), c);
            }
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double ma = 0, mb = 0;
                for (int j = 0; j < 11; ++j)
                    for (int i = 0; i < 11; ++i) {
                        ma += win[j][i] * A[(y + j) * pw + x + i];
                        mb += win[j][i] * B[(y + j) * pw + x + i];
                    }
                double va = 0, vb = 0, cov = 0;
                for (int j = 0; j < 11; ++j)
                    for (int i = 0; i < 11; ++i) {
                        const double da = A[(y + j) * pw + x + i] - ma, db = B[(y + j) * pw + x + i] - mb;
                        va += win[j][i] * da * da;
                        vb += win[j][i] * db * db;
                        cov += win[j][i] * da * db;
                    }
                total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    }
    return total / static_cast<double>(a.data.size());
}

Image<double> rand01(int w, int h, std::mt19937_64& rng) { return testutil::random_image(w, h, rng, 0, 1); }

}  // namespace

TEST(Psnr, IdenticalIsInfinite) {
    Image<double> a(8, 8, 3, 0.3);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Psnr, UniformOffsetGivesTwentyDb) {
    Image<double> a(8, 8, 3, 0.0), b(8, 8, 3, 0.1);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Psnr, MatchesDirectMse) {
    std::mt19937_64 rng(1);
    const auto a = rand01(13, 9, rng), b = rand01(13, 9, rng);
    double se = 0;
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 13; ++x)
            for (int c = 0; c < 3; ++c) se += std::pow(a.at(x, y, c) - b.at(x, y, c), 2);
    EXPECT_NEAR(psnr(a, b), -10 * std::log10(se / (13 * 9 * 3)), 1e-9);
}

TEST(Psnr, DecreasesWithPerturbationMagnitude) {
    std::mt19937_64 rng(2);
    const auto a = rand01(16, 16, rng);
    const auto noise = testutil::random_image(16, 16, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 20; ++k) {
        auto b = a;
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += 0.01 * k * noise.data[i];
        const double v = psnr(a, b);
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Psnr, ShapeMismatchThrows) {
    EXPECT_THROW(psnr(Image<double>(4, 4), Image<double>(4, 5)), ContractError);
}

TEST(Ssim, IdenticalIsOne) {
    std::mt19937_64 rng(3);
    const auto a = rand01(20, 16, rng);
    EXPECT_NEAR(ssim_reference(a, a), 1.0, 1e-12);
    const auto f = ssim_fast(a, a);
    EXPECT_NEAR(f.value, 1.0, 1e-12);
    for (double g : f.grad.data) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Ssim, InvertedImageIsWorse) {
    std::mt19937_64 rng(4);
    const auto a = rand01(16, 16, rng);
    auto b = a;
    for (auto& v : b.data) v = 1 - v;
    EXPECT_LT(ssim_reference(a, b), 1.0);
}

TEST(Ssim, ReferenceMatchesNaiveOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const auto a = rand01(17, 14, rng), b = rand01(17, 14, rng);
        EXPECT_NEAR(ssim_reference(a, b), naive_ssim(a, b), 1e-7);
    }
}

TEST(Ssim, FastMatchesReference) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = rand01(32, 24, rng);
        auto b = a;
        for (auto& v : b.data) v += 0.2 * (static_cast<double>(rng() % 1000) / 1000 - 0.5);
        EXPECT_NEAR(ssim_fast(a, b, {}, false).value, ssim_reference(a, b), 1e-9);
    }
}

TEST(Ssim, Symmetric) {
    std::mt19937_64 rng(7);
    const auto a = rand01(16, 16, rng), b = rand01(16, 16, rng);
    EXPECT_NEAR(ssim_fast(a, b).value, ssim_fast(b, a).value, 1e-9);
    EXPECT_NEAR(ssim_reference(a, b), ssim_reference(b, a), 1e-9);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    auto a = rand01(16, 16, rng);
    const auto b = rand01(16, 16, rng);
    const auto g = ssim_fast(a, b).grad;
    double worst = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double fd = testutil::central_difference(a.data[i], 1e-5, [&] { return ssim_reference(a, b); });
        worst = std::max(worst, testutil::relative_error(g.data[i], fd, 1e-6));
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(Ssim, ThreadedMatchesSingle) {
    std::mt19937_64 rng(9);
    const auto a = rand01(40, 30, rng), b = rand01(40, 30, rng);
    const auto s1 = ssim_fast(a, b, {}, true, 1), s3 = ssim_fast(a, b, {}, true, 3);
    EXPECT_EQ(s1.value, s3.value);
    EXPECT_EQ(s1.grad.data, s3.grad.data);
}

TEST(Ssim, RejectsSmallImagesAndBadParams) {
    Image<double> small(10, 20);
    EXPECT_THROW(ssim_reference(small, small), ContractError);
    EXPECT_THROW(ssim_fast(small, small), ContractError);
    SsimParams p;
    p.window = 4;
    Image<double> ok(16, 16);
    EXPECT_THROW(ssim_reference(ok, ok, p), ConfigError);
}
