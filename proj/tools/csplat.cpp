// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

// csplat: train, render, prune, inspect and benchmark compact Gaussian scenes.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csplat/io/compact.hpp"
#include "csplat/io/config.hpp"
#include "csplat/io/image_io.hpp"
#include "csplat/io/ply.hpp"
#include "csplat/io/scene.hpp"
#include "csplat/io/synth.hpp"
#include "csplat/metrics.hpp"
#include "csplat/signif.hpp"
#include "csplat/train.hpp"

namespace fs = std::filesystem;
using namespace csplat;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int default_threads() {
    if (const char* env = std::getenv("CSPLAT_THREADS")) {
        try {
            const int t = std::stoi(env);
            if (t >= 1) return t;
        } catch (const std::exception&) {
        }
        throw UsageError("CSPLAT_THREADS must be a positive integer");
    }
    return 1;
}

// Where a command gets its cameras (and target images) from.
struct SceneSource {
    std::string synth;
    std::string dir;
    std::uint64_t synth_seed = 0;

    void add_options(CLI::App* app) {
        auto* s = app->add_option("--synth", synth, "procedural preset (small|medium)");
        auto* d = app->add_option("--scene", dir, "scene directory (COLMAP sparse model plus images/)");
        app->add_option("--scene-seed", synth_seed, "seed of the procedural scene")->default_val(0);
        s->excludes(d);
    }
    bool given() const { return !synth.empty() || !dir.empty(); }
    TrainScene load() const {
        if (!synth.empty()) {
            try {
                return make_synth_scene(synth_preset(synth), synth_seed).scene;
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            }
        }
        if (dir.empty()) throw UsageError("one of --synth or --scene is required");
        if (!fs::is_directory(dir)) throw UsageError("scene directory not found: " + dir);
        return load_scene_dir(dir);
    }
};

void print_kv(std::ostream& os, const std::string& key, double v) {
    os << key << '=' << std::setprecision(10) << v << '\n';
}
void print_kv(std::ostream& os, const std::string& key, const std::string& v) { os << key << '=' << v << '\n'; }

std::string buckets_str(const std::array<std::uint32_t, 4>& b) {
    return std::to_string(b[0]) + ',' + std::to_string(b[1]) + ',' + std::to_string(b[2]) + ',' + std::to_string(b[3]);
}

GaussianCloud<float> load_model(const std::string& path) {
    if (!fs::exists(path)) throw InputError("scene file not found: " + path);
    if (fs::path(path).extension() == ".ply") return load_ply<float>(path);
    return load_compact<float>(path);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    SceneSource src;
    std::string config;
    std::vector<std::string> sets;
    std::optional<int> iters;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out = "csplat_out";
    int log_every = 500;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        if (!fs::exists(a.config)) throw UsageError("config file not found: " + a.config);
        cfg = load_config(a.config);
    }
    for (const auto& s : a.sets) apply_override(cfg, s);
    if (a.iters) cfg.iters = *a.iters;
    if (a.seed) cfg.seed = *a.seed;
    cfg.threads = a.threads.value_or(default_threads());
    cfg.validate();

    const TrainScene scene = a.src.load();
    fs::create_directories(a.out);
    std::ofstream csv(fs::path(a.out) / "metrics.csv");
    write_metrics_header(csv);
    const auto result = fit(scene, cfg, [&](const IterationMetrics& m) {
        write_metrics_row(csv, m);
        if (!a.quiet && a.log_every > 0 && (m.iteration % a.log_every == 0 || m.iteration == cfg.iters))
            std::cerr << "iter " << m.iteration << "  loss " << m.loss.total << "  psnr " << m.psnr << "  gaussians "
                      << m.gaussians << "  res " << m.width << 'x' << m.height << '\n';
    });
    {
        std::ofstream f(fs::path(a.out) / "scene.tgs", std::ios::binary);
        f.write(reinterpret_cast<const char*>(result.compact.data()), static_cast<std::streamsize>(result.compact.size()));
        if (!f) throw InputError("cannot write " + (fs::path(a.out) / "scene.tgs").string());
    }
    save_ply(result.cloud, fs::path(a.out) / "scene.ply");

    std::ostringstream sum;
    const auto& r = result.report;
    print_kv(sum, "tricks", describe_tricks(cfg.tricks));
    print_kv(sum, "iterations", r.iterations);
    print_kv(sum, "seed", static_cast<double>(cfg.seed));
    print_kv(sum, "train_views", static_cast<double>(r.train.views));
    print_kv(sum, "train_psnr", r.train.psnr);
    print_kv(sum, "train_ssim", r.train.ssim);
    print_kv(sum, "test_views", static_cast<double>(r.test.views));
    if (r.test.views > 0) {
        print_kv(sum, "test_psnr", r.test.psnr);
        print_kv(sum, "test_ssim", r.test.ssim);
    }
    print_kv(sum, "initial_gaussians", static_cast<double>(r.initial_count));
    print_kv(sum, "peak_gaussians", static_cast<double>(r.peak_count));
    print_kv(sum, "final_gaussians", static_cast<double>(r.final_count));
    print_kv(sum, "buckets", buckets_str(r.buckets));
    print_kv(sum, "compact_bytes", static_cast<double>(r.compact_bytes));
    print_kv(sum, "wall_seconds", r.wall_seconds);
    std::ofstream(fs::path(a.out) / "summary.txt") << sum.str();
    std::cout << sum.str();
    return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string model;
    SceneSource src;
    int view = 0;
    std::string out;
    bool fps = false;
    int runs = 50;
    bool eval = false;
    bool holdout = false;
    std::optional<int> threads;
};

int cmd_render(const RenderArgs& a) {
    const TrainScene scene = a.src.load();
    if (a.view < 0 || static_cast<std::size_t>(a.view) >= scene.views.size())
        throw UsageError("--view " + std::to_string(a.view) + " out of range (scene has " +
                         std::to_string(scene.views.size()) + " views)");
    const auto cloud = load_model(a.model);
    TrainConfig cfg;
    cfg.threads = a.threads.value_or(default_threads());
    cfg.holdout = a.holdout;
    RenderSettings rs;
    rs.background = cfg.background;
    rs.threads = cfg.threads;

    const auto& v = scene.views[static_cast<std::size_t>(a.view)];
    const auto img = clamp01(render_forward(cloud, v.camera, rs).image);
    print_kv(std::cout, "gaussians", static_cast<double>(cloud.size()));
    print_kv(std::cout, "view", v.name);
    print_kv(std::cout, "width", v.camera.width);
    print_kv(std::cout, "height", v.camera.height);
    print_kv(std::cout, "view_psnr", psnr(img, v.image));
    if (!a.out.empty()) write_image(img, a.out);

    if (a.eval) {
        std::vector<std::size_t> train_ids, test_ids;
        split_views(scene.views.size(), cfg.holdout, train_ids, test_ids);
        const auto tr = evaluate(cloud, scene.views, train_ids, cfg);
        print_kv(std::cout, "train_psnr", tr.psnr);
        print_kv(std::cout, "train_ssim", tr.ssim);
        if (!test_ids.empty()) {
            const auto te = evaluate(cloud, scene.views, test_ids, cfg);
            print_kv(std::cout, "test_psnr", te.psnr);
            print_kv(std::cout, "test_ssim", te.ssim);
        }
    }
    if (a.fps) {
        if (a.runs < 1) throw UsageError("--runs must be positive");
        std::vector<double> secs;
        for (int k = 0; k < a.runs; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto o = render_forward(cloud, v.camera, rs);
            secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            if (o.image.width != v.camera.width) return kExitRuntime;
        }
        double mean = 0;
        for (double s : secs) mean += s;
        mean /= static_cast<double>(secs.size());
        print_kv(std::cout, "fps_runs", static_cast<double>(secs.size()));
        print_kv(std::cout, "mean_frame_seconds", mean);
        print_kv(std::cout, "fps", 1.0 / mean);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct PruneArgs {
    std::string model;
    SceneSource src;
    double rate = 0.6;
    std::string out;
    std::optional<int> threads;
};

double mean_psnr(const GaussianCloud<float>& cloud, const TrainScene& scene, const RenderSettings& rs) {
    double total = 0;
    for (const auto& v : scene.views) total += psnr(clamp01(render_forward(cloud, v.camera, rs).image), v.image);
    return total / static_cast<double>(scene.views.size());
}

int cmd_prune(const PruneArgs& a) {
    if (!a.src.given()) throw UsageError("prune needs cameras: pass --synth or --scene");
    if (!(a.rate >= 0 && a.rate < 1)) throw UsageError("--rate must be in [0, 1)");
    if (a.out.empty()) throw UsageError("--out is required");
    const TrainScene scene = a.src.load();
    auto cloud = load_model(a.model);
    RenderSettings rs;
    rs.threads = a.threads.value_or(default_threads());

    std::vector<Camera> cams;
    for (const auto& v : scene.views) cams.push_back(v.camera);
    const std::size_t before = cloud.size();
    const double psnr_before = mean_psnr(cloud, scene, rs);
    const auto hits = count_hits(cloud, cams, rs);
    const auto report = significance_scores(hits, cloud);
    prune_by_significance(cloud, report.score, a.rate);
    const double psnr_after = mean_psnr(cloud, scene, rs);
    save_compact(cloud, a.out);

    print_kv(std::cout, "rate", a.rate);
    print_kv(std::cout, "gaussians_before", static_cast<double>(before));
    print_kv(std::cout, "gaussians_after", static_cast<double>(cloud.size()));
    print_kv(std::cout, "psnr_before", psnr_before);
    print_kv(std::cout, "psnr_after", psnr_after);
    print_kv(std::cout, "psnr_delta", psnr_after - psnr_before);
    print_kv(std::cout, "bytes", static_cast<double>(fs::file_size(a.out)));
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_info(const std::string& model) {
    const auto cloud = load_model(model);
    const auto b = bucket_histogram(cloud);
    const std::size_t full = ply_payload_bytes(cloud.size());
    const auto bytes = fs::file_size(model);
    print_kv(std::cout, "gaussians", static_cast<double>(cloud.size()));
    for (int k = 0; k < 4; ++k) print_kv(std::cout, "band" + std::to_string(k), b[static_cast<std::size_t>(k)]);
    print_kv(std::cout, "file_bytes", static_cast<double>(bytes));
    print_kv(std::cout, "full_precision_bytes", static_cast<double>(full));
    if (full > 0) print_kv(std::cout, "ratio", static_cast<double>(bytes) / static_cast<double>(full));
    return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    SceneSource src;
    std::string model;
    int runs = 5;
    int ssim_size = 512;
    bool deterministic = false;
    std::optional<int> threads;
    std::uint64_t seed = 0;
};

template <typename F>
double best_of(int runs, F&& f) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < runs; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

int cmd_bench(BenchArgs a) {
    if (a.runs < 1) throw UsageError("--runs must be positive");
    if (a.ssim_size < 11) throw UsageError("--ssim-size must be at least 11");
    const int threads = a.deterministic ? 1 : a.threads.value_or(default_threads());
    SceneSource src = a.src;
    if (!src.given()) src.synth = "medium";
    const TrainScene scene = src.load();
    GaussianCloud<float> cloud;
    if (!a.model.empty()) {
        cloud = load_model(a.model);
    } else {
        // Ground truth of the procedural scene, or a seeded cloud from the SfM points.
        if (!src.synth.empty()) cloud = make_synth_scene(synth_preset(src.synth), src.synth_seed).truth.cast<float>();
        else cloud = init_train_state<float>(scene.points, TrainConfig{}).cloud;
    }
    RenderSettings rs;
    rs.threads = threads;
    const auto& view = scene.views.front();
    RenderOutput<float> fwd;
    const double t_fwd = best_of(a.runs, [&] { fwd = render_forward(cloud, view.camera, rs); });
    Image<float> d_image(view.camera.width, view.camera.height, 3);
    for (std::size_t i = 0; i < d_image.data.size(); ++i) d_image.data[i] = fwd.image.data[i] - view.image.data[i];
    const double t_bwd = best_of(a.runs, [&] { (void)render_backward(cloud, view.camera, rs, fwd, d_image); });

    std::uint64_t blends = 0, visible = 0;
    for (auto c : fwd.n_contrib) blends += c;
    for (const auto& s : fwd.splats) visible += s.visible ? 1 : 0;

    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> u(0, 1);
    Image<double> x(a.ssim_size, a.ssim_size, 3), y(a.ssim_size, a.ssim_size, 3);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        x.data[i] = u(rng);
        y.data[i] = std::clamp(x.data[i] + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
    }
    double s_ref = 0, s_fast = 0;
    const double t_ref = best_of(1, [&] { s_ref = ssim_reference(x, y); });
    const double t_fast = best_of(a.runs, [&] { s_fast = ssim_fast(x, y, SsimParams{}, false, threads).value; });
    const double t_fast_grad = best_of(a.runs, [&] { (void)ssim_fast(x, y, SsimParams{}, true, threads); });

    print_kv(std::cout, "threads", threads);
    print_kv(std::cout, "gaussians", static_cast<double>(cloud.size()));
    print_kv(std::cout, "width", view.camera.width);
    print_kv(std::cout, "height", view.camera.height);
    print_kv(std::cout, "visible_gaussians", static_cast<double>(visible));
    print_kv(std::cout, "blend_ops", static_cast<double>(blends));
    print_kv(std::cout, "forward_seconds", t_fwd);
    print_kv(std::cout, "backward_seconds", t_bwd);
    print_kv(std::cout, "ssim_size", a.ssim_size);
    print_kv(std::cout, "ssim_reference_seconds", t_ref);
    print_kv(std::cout, "ssim_fast_seconds", t_fast);
    print_kv(std::cout, "ssim_fast_grad_seconds", t_fast_grad);
    print_kv(std::cout, "ssim_speedup", t_ref / t_fast);
    print_kv(std::cout, "ssim_abs_diff", std::abs(s_ref - s_fast));
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& preset, std::uint64_t seed, const std::string& out) {
    SynthPreset p;
    try {
        p = synth_preset(preset);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto s = make_synth_scene(p, seed);
    write_synth_scene(s, out);
    save_compact(s.truth, fs::path(out) / "truth.tgs");
    print_kv(std::cout, "preset", p.name);
    print_kv(std::cout, "views", static_cast<double>(s.images.size()));
    print_kv(std::cout, "points", static_cast<double>(s.bundle.points.size()));
    print_kv(std::cout, "gaussians", static_cast<double>(s.truth.size()));
    print_kv(std::cout, "dir", out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"csplat: compact Gaussian splatting on the CPU"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "fit a scene and write scene.tgs, scene.ply, metrics.csv, summary.txt");
    ta.src.add_options(train);
    train->add_option("--config", ta.config, "key = value config file");
    train->add_option("--set", ta.sets, "override a config key (key=value), repeatable");
    train->add_option("--iters", ta.iters, "training iterations");
    train->add_option("--seed", ta.seed, "training seed");
    train->add_option("--threads", ta.threads, "worker threads (1 is fully deterministic)");
    train->add_option("--out", ta.out, "output directory")->default_val("csplat_out");
    train->add_option("--log-every", ta.log_every, "progress interval on stderr (0 disables)")->default_val(500);
    train->add_flag("--quiet", ta.quiet, "no progress output");

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "render one camera of a scene from a saved model");
    render->add_option("model", ra.model, "model file (.tgs or .ply)")->required();
    ra.src.add_options(render);
    render->add_option("--view", ra.view, "camera index")->default_val(0);
    render->add_option("-o,--out", ra.out, "output image (.png or .ppm)");
    render->add_flag("--fps", ra.fps, "time repeated renders of the view");
    render->add_option("--runs", ra.runs, "renders timed by --fps")->default_val(50);
    render->add_flag("--eval", ra.eval, "report PSNR/SSIM over the training (and held-out) views");
    render->add_flag("--holdout", ra.holdout, "hold out every 8th view in --eval");
    render->add_option("--threads", ra.threads, "worker threads");

    PruneArgs pa;
    auto* prune = app.add_subcommand("prune", "significance pruning of a saved model without retraining");
    prune->add_option("model", pa.model, "model file (.tgs or .ply)")->required();
    pa.src.add_options(prune);
    prune->add_option("--rate", pa.rate, "fraction removed, in [0, 1)")->default_val(0.6);
    prune->add_option("-o,--out", pa.out, "pruned .tgs file");
    prune->add_option("--threads", pa.threads, "worker threads");

    std::string info_model;
    auto* info = app.add_subcommand("info", "scene statistics");
    info->add_option("model", info_model, "model file (.tgs or .ply)")->required();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "time rendering and SSIM");
    ba.src.add_options(bench);
    bench->add_option("--model", ba.model, "model to render (default: the scene's ground truth or SfM seed)");
    bench->add_option("--runs", ba.runs, "timed repetitions (best is reported)")->default_val(5);
    bench->add_option("--ssim-size", ba.ssim_size, "side of the SSIM benchmark images")->default_val(512);
    bench->add_flag("--deterministic", ba.deterministic, "single thread, fixed inputs");
    bench->add_option("--threads", ba.threads, "worker threads");
    bench->add_option("--seed", ba.seed, "seed of the SSIM inputs")->default_val(0);

    std::string synth_name, synth_out;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "write a procedural scene directory");
    synth->add_option("preset", synth_name, "small or medium")->required();
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "scene seed")->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*render) return cmd_render(ra);
        if (*prune) return cmd_prune(pa);
        if (*info) return cmd_info(info_model);
        if (*bench) return cmd_bench(ba);
        if (*synth) return cmd_synth(synth_name, synth_seed, synth_out);
    } catch (const UsageError& e) {
        std::cerr << "csplat: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "csplat: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "csplat: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
