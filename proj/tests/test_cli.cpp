// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::map<std::string, std::string> kv;
    std::string err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("csplat_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

CliRun cli(const std::string& args) {
    const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
    const std::string cmd = std::string("\"") + CSPLAT_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::istringstream in(slurp(out));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) r.kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    r.err = slurp(err);
    return r;
}

double num(const CliRun& r, const std::string& key) {
    const auto it = r.kv.find(key);
    if (it == r.kv.end()) throw std::runtime_error("missing key " + key);
    return std::stod(it->second);
}

// One baseline fit of the small scene shared by the tests below.
const CliRun& trained() {
    static const CliRun r = [] {
        const auto scene = scratch() / "small";
        cli("synth small --out \"" + scene.string() + "\"");
        return cli("train --scene \"" + scene.string() + "\" --iters 2000 --set tricks.all=false --quiet --out \"" +
                   (scratch() / "fit").string() + "\"");
    }();
    return r;
}

std::string model() { return "\"" + (scratch() / "fit" / "scene.tgs").string() + "\""; }
std::string scene_arg() { return "--scene \"" + (scratch() / "small").string() + "\""; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    const auto missing = cli("train --scene /nonexistent/scene/dir --iters 10");
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.err.find("not found"), std::string::npos);
    EXPECT_EQ(cli("train --synth small --set no.such.key=1").code, 2);
    EXPECT_EQ(cli("train --synth small --set mask.eps_sh=1.5").code, 2);
    EXPECT_EQ(cli("train --synth huge").code, 2);
    EXPECT_EQ(cli("synth nope --out x").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").code, 0); }

TEST(Cli, BaselineTrainWritesArtifactsAndConverges) {
    const auto& r = trained();
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GT(num(r, "train_psnr"), 35.0);
    EXPECT_EQ(r.kv.at("tricks"), "BL- DS- SG- GM- SHM- AT- DE- SC-");
    for (const char* f : {"scene.tgs", "scene.ply", "metrics.csv", "summary.txt"})
        EXPECT_TRUE(fs::exists(scratch() / "fit" / f)) << f;
    EXPECT_EQ(num(r, "compact_bytes"), static_cast<double>(fs::file_size(scratch() / "fit" / "scene.tgs")));
    EXPECT_GE(num(r, "peak_gaussians"), num(r, "final_gaussians"));
    // header plus one row per iteration
    const auto csv = slurp(scratch() / "fit" / "metrics.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2001);
}

TEST(Cli, RenderReproducesTrainingPsnr) {
    ASSERT_EQ(trained().code, 0);
    const auto r = cli("render " + model() + " " + scene_arg() + " --eval --view 2 -o \"" +
                       (scratch() / "view2.png").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(num(r, "train_psnr"), num(trained(), "train_psnr"), 0.01);
    EXPECT_TRUE(fs::exists(scratch() / "view2.png"));
}

TEST(Cli, RenderFpsReportsFiftyRuns) {
    ASSERT_EQ(trained().code, 0);
    const auto r = cli("render " + model() + " " + scene_arg() + " --fps");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(num(r, "fps_runs"), 50);
    EXPECT_TRUE(std::isfinite(num(r, "fps")));
    EXPECT_GT(num(r, "fps"), 0);
}

TEST(Cli, RenderErrors) {
    ASSERT_EQ(trained().code, 0);
    EXPECT_EQ(cli("render " + model() + " " + scene_arg() + " --view 8").code, 2);
    EXPECT_EQ(cli("render " + model() + " " + scene_arg() + " --view -1").code, 2);
    EXPECT_EQ(cli("render " + model()).code, 2);
    EXPECT_EQ(cli("render /nonexistent.tgs " + scene_arg()).code, 1);
}

TEST(Cli, InfoMatchesWriter) {
    ASSERT_EQ(trained().code, 0);
    const auto r = cli("info " + model());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(num(r, "gaussians"), num(trained(), "final_gaussians"));
    const auto buckets = trained().kv.at("buckets");
    EXPECT_EQ(r.kv.at("band0") + "," + r.kv.at("band1") + "," + r.kv.at("band2") + "," + r.kv.at("band3"), buckets);
    EXPECT_EQ(num(r, "file_bytes"), num(trained(), "compact_bytes"));
    EXPECT_EQ(num(r, "full_precision_bytes"), num(r, "gaussians") * 62 * 4);
}

TEST(Cli, PruneRateZeroKeepsTheFile) {
    ASSERT_EQ(trained().code, 0);
    const auto out = scratch() / "p0.tgs";
    const auto r = cli("prune " + model() + " " + scene_arg() + " --rate 0 -o \"" + out.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    // Identical up to re-serialization: same layout, every Gaussian kept.
    EXPECT_EQ(fs::file_size(out), fs::file_size(scratch() / "fit" / "scene.tgs"));
    EXPECT_EQ(num(r, "gaussians_after"), num(r, "gaussians_before"));
    const auto a = cli("info \"" + out.string() + "\""), b = cli("info " + model());
    for (const char* key : {"gaussians", "band0", "band1", "band2", "band3"}) EXPECT_EQ(a.kv.at(key), b.kv.at(key)) << key;
    EXPECT_EQ(num(r, "psnr_delta"), 0.0);
}

TEST(Cli, PruneRemovesScheduledFraction) {
    ASSERT_EQ(trained().code, 0);
    const auto out = scratch() / "p6.tgs";
    const auto r = cli("prune " + model() + " " + scene_arg() + " --rate 0.6 -o \"" + out.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const double n = num(r, "gaussians_before");
    EXPECT_EQ(num(r, "gaussians_after"), n - std::floor(0.6 * n));
    EXPECT_TRUE(std::isfinite(num(r, "psnr_after")));
    EXPECT_EQ(num(cli("info \"" + out.string() + "\""), "gaussians"), num(r, "gaussians_after"));
}

TEST(Cli, PruneNeedsCameras) {
    ASSERT_EQ(trained().code, 0);
    EXPECT_EQ(cli("prune " + model() + " --rate 0.5 -o \"" + (scratch() / "x.tgs").string() + "\"").code, 2);
}

TEST(Cli, DeterministicBenchIsStable) {
    const auto a = cli("bench --synth small --deterministic --runs 1 --ssim-size 64");
    const auto b = cli("bench --synth small --deterministic --runs 1 --ssim-size 64");
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(a.kv.at("blend_ops"), b.kv.at("blend_ops"));
    EXPECT_EQ(a.kv.at("visible_gaussians"), b.kv.at("visible_gaussians"));
    EXPECT_GT(num(a, "blend_ops"), 0);
    EXPECT_LT(num(a, "ssim_abs_diff"), 1e-6);
}
